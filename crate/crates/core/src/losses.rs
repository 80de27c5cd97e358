//! Training objectives with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{logistic, softplus, squared_distance, DenseMatrix};

/// Per-step loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub discrimination: f64,
    pub dilation: f64,
    pub shrink: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossReport {
    pub fn new(dilation: f64, shrink: f64, discrimination: f64, alpha: f64) -> Self {
        Self {
            discrimination,
            dilation,
            shrink,
            total: total_loss(dilation, shrink, discrimination, alpha),
            alpha,
        }
    }

    /// Pre-training report: only the discrimination term is active.
    pub fn discrimination_only(discrimination: f64) -> Self {
        Self {
            discrimination,
            dilation: 0.0,
            shrink: 0.0,
            total: discrimination,
            alpha: 1.0,
        }
    }
}

/// `dilation + shrink + alpha · discrimination`.
pub fn total_loss(dilation: f64, shrink: f64, discrimination: f64, alpha: f64) -> f64 {
    dilation + shrink + alpha * discrimination
}

/// Binary cross-entropy classifying original summaries as 1 and corrupted ones as 0,
/// on summaries already squashed into (0, 1).
///
/// Returns `(value, grad_g, grad_g_aug)`.
pub fn discrimination_loss(g: &[f64], g_aug: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_pair(g.len(), g_aug.len())?;
    let b = g.len() as f64;
    let value = g
        .iter()
        .zip(g_aug)
        .map(|(&p, &q)| -p.ln() - (1.0 - q).ln())
        .sum::<f64>()
        / b;
    let grad_g = g.iter().map(|&p| -1.0 / (b * p)).collect();
    let grad_aug = g_aug.iter().map(|&q| 1.0 / (b * (1.0 - q))).collect();
    Ok((value, grad_g, grad_aug))
}

/// [`discrimination_loss`] expressed on the summary logits `s` (with `g = σ(s)`);
/// finite for any finite logits.
pub fn discrimination_loss_logits(s: &[f64], s_aug: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_pair(s.len(), s_aug.len())?;
    let b = s.len() as f64;
    let value = s
        .iter()
        .zip(s_aug)
        .map(|(&x, &y)| softplus(-x) + softplus(y))
        .sum::<f64>()
        / b;
    let grad_s = s.iter().map(|&x| (logistic(x) - 1.0) / b).collect();
    let grad_aug = s_aug.iter().map(|&y| logistic(y) / b).collect();
    Ok((value, grad_s, grad_aug))
}

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape("discrimination_loss", a, b));
    }
    if a == 0 {
        return Err(Error::Argument(
            "discrimination_loss needs at least one node".into(),
        ));
    }
    Ok(())
}

/// Negative mean squared distance over ordered pairs of distinct centers.
///
/// Returns `(value, grad_c)`.
pub fn dilation_loss(c: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let k = c.rows();
    if k < 2 {
        return Err(Error::Argument(format!(
            "dilation loss needs K >= 2, got {k}"
        )));
    }
    let scale = -1.0 / ((k - 1) * k) as f64;
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                sum += squared_distance(c.row(i), c.row(j));
            }
        }
    }
    // ∂/∂cₐ Σ_{i≠j} ‖cᵢ − cⱼ‖² = 4 Σ_{j≠a} (cₐ − cⱼ) = 4 (K·cₐ − Σⱼ cⱼ)
    let mut total = vec![0.0; c.cols()];
    for row in c.row_iter() {
        total.iter_mut().zip(row).for_each(|(t, v)| *t += v);
    }
    let mut grad = DenseMatrix::zeros(k, c.cols());
    for a in 0..k {
        for ((g, &ca), &t) in grad.row_mut(a).iter_mut().zip(c.row(a)).zip(&total) {
            *g = scale * 4.0 * (k as f64 * ca - t);
        }
    }
    Ok((scale * sum, grad))
}

/// Mean squared distance from every sample to every center.
///
/// Returns `(value, grad_h, grad_c)`.
pub fn shrink_loss(h: &DenseMatrix, c: &DenseMatrix) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    check_shrink(h, c)?;
    let (b, k, d) = (h.rows(), c.rows(), h.cols());
    let denom = (b * k) as f64;
    let mut sum = 0.0;
    for hi in h.row_iter() {
        for cj in c.row_iter() {
            sum += squared_distance(hi, cj);
        }
    }
    let h_mean = column_mean(h);
    let c_mean = column_mean(c);
    // ∂/∂hᵢ = (2/B)(hᵢ − c̄),  ∂/∂cⱼ = (2/K)(cⱼ − h̄)
    let mut grad_h = DenseMatrix::zeros(b, d);
    for i in 0..b {
        for ((g, &x), &m) in grad_h.row_mut(i).iter_mut().zip(h.row(i)).zip(&c_mean) {
            *g = 2.0 / b as f64 * (x - m);
        }
    }
    let mut grad_c = DenseMatrix::zeros(k, d);
    for j in 0..k {
        for ((g, &x), &m) in grad_c.row_mut(j).iter_mut().zip(c.row(j)).zip(&h_mean) {
            *g = 2.0 / k as f64 * (x - m);
        }
    }
    Ok((sum / denom, grad_h, grad_c))
}

/// Ablation variant: mean squared distance from each sample to its nearest center
/// (ties toward the lowest index).
pub fn shrink_loss_nearest(
    h: &DenseMatrix,
    c: &DenseMatrix,
) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    check_shrink(h, c)?;
    let b = h.rows() as f64;
    let mut sum = 0.0;
    let mut grad_h = DenseMatrix::zeros(h.rows(), h.cols());
    let mut grad_c = DenseMatrix::zeros(c.rows(), c.cols());
    for i in 0..h.rows() {
        let hi = h.row(i);
        let (best, dist) = c
            .row_iter()
            .map(|cj| squared_distance(hi, cj))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (j, d)| if d < acc.1 { (j, d) } else { acc },
            );
        sum += dist;
        let cj = c.row(best).to_vec();
        for ((gh, &x), &m) in grad_h.row_mut(i).iter_mut().zip(hi).zip(&cj) {
            *gh = 2.0 / b * (x - m);
        }
        for ((gc, &x), &m) in grad_c.row_mut(best).iter_mut().zip(hi).zip(&cj) {
            *gc += 2.0 / b * (m - x);
        }
    }
    Ok((sum / b, grad_h, grad_c))
}

fn check_shrink(h: &DenseMatrix, c: &DenseMatrix) -> Result<()> {
    if h.cols() != c.cols() {
        return Err(Error::shape(
            "shrink_loss",
            format!("{} columns", h.cols()),
            c.cols(),
        ));
    }
    if h.rows() == 0 || c.rows() == 0 {
        return Err(Error::Argument(
            "shrink_loss needs B >= 1 and K >= 1".into(),
        ));
    }
    Ok(())
}

fn column_mean(m: &DenseMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for row in m.row_iter() {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|a| *a /= n);
    mean
}

/// Norms below this are treated as this value when normalizing rows.
pub const NORM_FLOOR: f64 = 1e-12;

/// Scales each row to unit Euclidean length; returns the normalized matrix and the
/// row norms needed by [`normalize_rows_backward`].
pub fn normalize_rows(x: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let norm = row
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(NORM_FLOOR);
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    (out, norms)
}

/// Gradient through [`normalize_rows`]: `(g − y (y·g)) / ‖x‖` per row.
pub fn normalize_rows_backward(
    normalized: &DenseMatrix,
    norms: &[f64],
    upstream: &DenseMatrix,
) -> DenseMatrix {
    let mut grad = upstream.clone();
    for (r, &norm) in norms.iter().enumerate() {
        let y = normalized.row(r);
        let proj = crate::numerics::dot(y, upstream.row(r));
        for (g, &yv) in grad.row_mut(r).iter_mut().zip(y) {
            *g = (*g - yv * proj) / norm;
        }
    }
    grad
}
