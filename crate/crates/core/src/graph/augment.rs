use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SparseGraph;
use crate::error::{Error, Result};

/// Corruption applied to build the second view of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Permute feature rows uniformly at random.
    pub feature_shuffle: bool,
    /// Probability of removing each undirected edge.
    pub edge_dropout_rate: f64,
    /// Probability of zeroing each feature entry.
    pub feature_mask_rate: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            feature_shuffle: true,
            edge_dropout_rate: 0.2,
            feature_mask_rate: 0.0,
        }
    }
}

impl AugmentationSpec {
    pub const IDENTITY: Self = Self {
        feature_shuffle: false,
        edge_dropout_rate: 0.0,
        feature_mask_rate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("edge_dropout_rate", self.edge_dropout_rate),
            ("feature_mask_rate", self.feature_mask_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Argument(format!(
                    "{name} must lie in [0, 1), got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// Returns a corrupted copy of `g`: row shuffle, then edge dropout, then feature masking.
pub fn augment<R: Rng + ?Sized>(
    g: &SparseGraph,
    spec: &AugmentationSpec,
    rng: &mut R,
) -> Result<SparseGraph> {
    spec.validate()?;
    let n = g.num_nodes();
    let mut features = if spec.feature_shuffle {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        g.features().select_rows(&perm)
    } else {
        g.features().clone()
    };

    let (indptr, indices) = if spec.edge_dropout_rate > 0.0 {
        let kept: Vec<(usize, usize)> = g
            .undirected_edges()
            .filter(|_| !rng.random_bool(spec.edge_dropout_rate))
            .collect();
        csr_from_sorted_pairs(n, &kept)
    } else {
        (g.indptr().to_vec(), g.indices().to_vec())
    };

    if spec.feature_mask_rate > 0.0 {
        for v in features.as_mut_slice() {
            if rng.random_bool(spec.feature_mask_rate) {
                *v = 0.0;
            }
        }
    }

    Ok(SparseGraph::with_parts(
        indptr,
        indices,
        features,
        g.labels().map(<[usize]>::to_vec),
    ))
}

/// CSR arrays for the symmetric closure of `pairs`, which must satisfy `u < v` and be
/// sorted lexicographically and unique.
fn csr_from_sorted_pairs(n: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut degree = vec![0usize; n];
    for &(u, v) in pairs {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    for d in &degree {
        indptr.push(indptr.last().unwrap() + d);
    }
    let mut cursor = indptr[..n].to_vec();
    let mut indices = vec![0; indptr[n]];
    // Lower neighbors of v arrive in increasing u order; upper neighbors of u in
    // increasing v order, always after the lower ones, so rows come out sorted.
    for &(u, v) in pairs {
        indices[cursor[v]] = u;
        cursor[v] += 1;
    }
    for &(u, v) in pairs {
        indices[cursor[u]] = v;
        cursor[u] += 1;
    }
    (indptr, indices)
}
