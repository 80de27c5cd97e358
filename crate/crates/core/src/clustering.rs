//! Cluster centers: K-Means++ seeding, Lloyd refinement, nearest-center
//! assignment and the plain K-Means baseline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, DenseMatrix, ParamTensor};

/// Magnitude of the perturbation applied to duplicated initial centers.
pub const DUPLICATE_JITTER: f64 = 1e-6;

/// Learnable `K × d` center matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenters {
    pub centers: ParamTensor,
}

impl ClusterCenters {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::Argument(
                "at least one cluster center required".into(),
            ));
        }
        if !values.is_finite() {
            return Err(Error::Numeric("non-finite cluster center".into()));
        }
        Ok(Self {
            centers: ParamTensor::new("centers", values),
        })
    }

    pub fn k(&self) -> usize {
        self.centers.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.value.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.centers.value
    }
}

/// Cluster id per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentVector(pub Vec<usize>);

impl AssignmentVector {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for AssignmentVector {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

fn check_dims(h: &DenseMatrix, c: &DenseMatrix, context: &str) -> Result<()> {
    if h.cols() != c.cols() {
        return Err(Error::shape(
            context,
            format!("{} columns", c.cols()),
            h.cols(),
        ));
    }
    Ok(())
}

/// Index and squared distance of the nearest center; ties go to the lowest index.
#[inline]
pub fn nearest_center(x: &[f64], c: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, cj) in c.row_iter().enumerate() {
        let d = squared_distance(x, cj);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// K-Means++ seeding: the first center is a uniformly chosen row, each further one a
/// row drawn with probability proportional to its squared distance from the nearest
/// chosen center. If every remaining weight is zero a row is drawn uniformly and the
/// resulting duplicate receives a small jitter.
pub fn kmeanspp_init<R: Rng + ?Sized>(
    h: &DenseMatrix,
    k: usize,
    rng: &mut R,
) -> Result<ClusterCenters> {
    let n = h.rows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "cluster count {k} must lie in 1..={n} (number of rows)"
        )));
    }
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = h
        .row_iter()
        .map(|r| squared_distance(r, h.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final partial sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(squared_distance(h.row(i), h.row(next)));
        }
    }

    let mut centers = h.select_rows(&chosen);
    for a in 1..k {
        let duplicate = (0..a).any(|b| centers.row(a) == centers.row(b));
        if duplicate {
            for v in centers.row_mut(a) {
                *v += rng.random_range(-DUPLICATE_JITTER..=DUPLICATE_JITTER);
            }
        }
    }
    ClusterCenters::new(centers)
}

/// Outcome of [`lloyd_refine_traced`].
#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub centers: ClusterCenters,
    /// Within-cluster sum of squares measured at each assignment step.
    pub wcss: Vec<f64>,
    /// Whether any empty cluster had to be re-seeded.
    pub reseeded: bool,
}

/// `iters` rounds of assign-then-recenter.
pub fn lloyd_refine(h: &DenseMatrix, c: &ClusterCenters, iters: usize) -> Result<ClusterCenters> {
    Ok(lloyd_refine_traced(h, c, iters)?.centers)
}

pub fn lloyd_refine_traced(
    h: &DenseMatrix,
    c: &ClusterCenters,
    iters: usize,
) -> Result<LloydOutcome> {
    check_dims(h, c.values(), "lloyd_refine")?;
    let (k, d) = (c.k(), c.dim());
    let mut centers = c.values().clone();
    let mut wcss = Vec::with_capacity(iters);
    let mut reseeded = false;
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..iters {
        let nearest: Vec<(usize, f64)> =
            h.row_iter().map(|r| nearest_center(r, &centers)).collect();
        wcss.push(nearest.iter().map(|p| p.1).sum());
        let labels: Vec<usize> = nearest.iter().map(|p| p.0).collect();
        if previous.as_ref() == Some(&labels) {
            break;
        }

        let mut sums = DenseMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &j) in labels.iter().enumerate() {
            counts[j] += 1;
            sums.row_mut(j)
                .iter_mut()
                .zip(h.row(i))
                .for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; h.rows()];
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (cv, s) in centers.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *cv = s * inv;
                }
            } else {
                // farthest point from its own center that has not already been used
                let far = nearest.iter().enumerate().filter(|(i, _)| !taken[*i]).fold(
                    None::<(usize, f64)>,
                    |best, (i, p)| match best {
                        Some((_, bd)) if bd >= p.1 => best,
                        _ => Some((i, p.1)),
                    },
                );
                if let Some((i, _)) = far {
                    taken[i] = true;
                    centers.row_mut(j).copy_from_slice(h.row(i));
                    reseeded = true;
                }
            }
        }
        previous = Some(labels);
    }
    Ok(LloydOutcome {
        centers: ClusterCenters::new(centers)?,
        wcss,
        reseeded,
    })
}

/// Nearest-center assignment, lowest index on ties.
pub fn assign(h: &DenseMatrix, c: &DenseMatrix) -> Result<AssignmentVector> {
    check_dims(h, c, "assign")?;
    if c.rows() == 0 {
        return Err(Error::Argument("assign needs at least one center".into()));
    }
    let ids: Vec<usize> = if h.rows() * c.rows() * c.cols() >= 1 << 16 {
        (0..h.rows())
            .into_par_iter()
            .map(|i| nearest_center(h.row(i), c).0)
            .collect()
    } else {
        h.row_iter().map(|r| nearest_center(r, c).0).collect()
    };
    Ok(AssignmentVector(ids))
}

/// Sum of squared distances from each row to its nearest center.
pub fn wcss(h: &DenseMatrix, c: &DenseMatrix) -> f64 {
    h.row_iter().map(|r| nearest_center(r, c).1).sum()
}

/// Result of the K-Means baseline.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: AssignmentVector,
    pub centers: ClusterCenters,
    pub wcss: f64,
}

/// Lloyd iterations per restart in the baseline (stops early on convergence).
pub const BASELINE_MAX_ITERS: usize = 300;

/// Best-of-`restarts` K-Means++-seeded Lloyd clustering, ranked by WCSS.
pub fn kmeans_baseline<R: Rng + ?Sized>(
    x: &DenseMatrix,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let seeds = kmeanspp_init(x, k, rng)?;
        let centers = lloyd_refine(x, &seeds, BASELINE_MAX_ITERS)?;
        let score = wcss(x, centers.values());
        if best.as_ref().is_none_or(|b| score < b.wcss) {
            best = Some(KMeansResult {
                assignment: assign(x, centers.values())?,
                centers,
                wcss: score,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
