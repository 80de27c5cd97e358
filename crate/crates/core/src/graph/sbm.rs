use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Planted-partition generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Block `b` has feature mean `feature_shift · e_b`.
    pub feature_shift: f64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.blocks < 2 {
            return Err(Error::Argument("SBM needs at least 2 blocks".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Argument("SBM block_size must be positive".into()));
        }
        let prob = 0.0..=1.0;
        if !prob.contains(&self.p_in) || !prob.contains(&self.p_out) || self.p_in <= self.p_out {
            return Err(Error::Argument(format!(
                "SBM needs 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.feature_dim < self.blocks {
            return Err(Error::Argument(format!(
                "feature_dim ({}) must be at least the block count ({})",
                self.feature_dim, self.blocks
            )));
        }
        if !self.feature_shift.is_finite() {
            return Err(Error::Argument("feature_shift must be finite".into()));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks * self.block_size
    }
}

/// Samples a stochastic block model graph. Node `i` belongs to block `i / block_size`;
/// labels are block ids and features are unit-variance Gaussians around the block mean.
pub fn generate_sbm<R: Rng + ?Sized>(params: &SbmParams, rng: &mut R) -> Result<SparseGraph> {
    params.validate()?;
    let n = params.num_nodes();
    let s = params.block_size;
    let mut edges = Vec::new();
    for u in 0..n {
        let block_end = (u / s + 1) * s;
        sample_segment(u, u + 1..block_end, params.p_in, rng, &mut edges);
        sample_segment(u, block_end..n, params.p_out, rng, &mut edges);
    }

    let labels: Vec<usize> = (0..n).map(|u| u / s).collect();
    let d = params.feature_dim;
    let mut data = Vec::with_capacity(n * d);
    for &block in &labels {
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            let mean = if j == block {
                params.feature_shift
            } else {
                0.0
            };
            data.push(mean + noise);
        }
    }
    let features = DenseMatrix::from_vec(n, d, data)?;
    SparseGraph::from_edges(features, &edges, Some(labels))
}

/// Bernoulli(p) over each `v` in `range`, using geometric skips so sparse
/// segments cost time proportional to the edges drawn.
fn sample_segment<R: Rng + ?Sized>(
    u: usize,
    range: std::ops::Range<usize>,
    p: f64,
    rng: &mut R,
    out: &mut Vec<(usize, usize)>,
) {
    if p <= 0.0 || range.is_empty() {
        return;
    }
    if p >= 1.0 {
        out.extend(range.map(|v| (u, v)));
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut v = range.start;
    loop {
        let r: f64 = rng.random();
        let skip = ((1.0 - r).ln() / log_q).floor();
        if skip >= (range.end - v) as f64 {
            break;
        }
        v += skip as usize;
        out.push((u, v));
        v += 1;
        if v >= range.end {
            break;
        }
    }
}
