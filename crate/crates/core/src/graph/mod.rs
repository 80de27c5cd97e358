//! Node-attributed undirected graphs: storage, file formats, normalization,
//! augmentation, batching and synthetic fixtures.

mod augment;
mod batch;
pub mod io;
mod normalize;
mod sbm;

pub use augment::{augment, AugmentationSpec};
pub use batch::{full_batch, partition_nodes, sample_batches, MiniBatch};
pub use io::{load_graph, GraphFiles};
pub use normalize::{normalize_adjacency, NormalizedAdjacency};
pub use sbm::{generate_sbm, SbmParams};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Immutable node-attributed graph with symmetric CSR adjacency.
///
/// Self-loops are never stored; the normalization adds them implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
}

impl SparseGraph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// deduplicated and self-loops dropped.
    pub fn from_edges(
        features: DenseMatrix,
        edges: &[(usize, usize)],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = features.rows();
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::Range {
                        context: "edge endpoint".into(),
                        index: w as u64,
                        limit: n as u64,
                    });
                }
            }
            if u != v {
                degree[u] += 1;
                degree[v] += 1;
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        for d in &degree {
            indptr.push(indptr.last().unwrap() + d);
        }
        let mut cursor = indptr[..n].to_vec();
        let mut indices = vec![0usize; indptr[n]];
        for &(u, v) in edges {
            if u != v {
                indices[cursor[u]] = v;
                cursor[u] += 1;
                indices[cursor[v]] = u;
                cursor[v] += 1;
            }
        }
        // sort + dedup each row, then compact
        let mut compact_ptr = Vec::with_capacity(n + 1);
        compact_ptr.push(0);
        let mut compact = Vec::with_capacity(indices.len());
        for r in 0..n {
            let row = &mut indices[indptr[r]..indptr[r + 1]];
            row.sort_unstable();
            let mut last = None;
            for &c in row.iter() {
                if last != Some(c) {
                    compact.push(c);
                    last = Some(c);
                }
            }
            compact_ptr.push(compact.len());
        }
        Self::from_csr(features, compact_ptr, compact, labels)
    }

    /// Wraps pre-built CSR arrays after validating every invariant.
    pub fn from_csr(
        features: DenseMatrix,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let g = Self {
            indptr,
            indices,
            features,
            labels,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks the structural invariants: monotone offsets, strictly increasing
    /// in-range columns, no self-loops, symmetry, label length.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.indptr.len() != n + 1 || self.indptr[0] != 0 || self.indptr[n] != self.indices.len()
        {
            return Err(Error::shape(
                "adjacency offsets",
                format!("{} offsets ending at {}", n + 1, self.indices.len()),
                self.indptr.len(),
            ));
        }
        for u in 0..n {
            if self.indptr[u] > self.indptr[u + 1] {
                return Err(Error::Argument(format!(
                    "adjacency offsets decrease at node {u}"
                )));
            }
            let row = self.neighbors(u);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "neighbors of node {u} not strictly increasing"
                )));
            }
            for &v in row {
                if v >= n {
                    return Err(Error::Range {
                        context: format!("neighbor of node {u}"),
                        index: v as u64,
                        limit: n as u64,
                    });
                }
                if v == u {
                    return Err(Error::Argument(format!("stored self-loop at node {u}")));
                }
            }
        }
        for u in 0..n {
            for &v in self.neighbors(u) {
                if !self.has_edge(v, u) {
                    return Err(Error::Argument(format!(
                        "adjacency not symmetric: ({u},{v}) without ({v},{u})"
                    )));
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::shape("labels", n, labels.len()));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// `max(label) + 1`, or `None` for unlabeled graphs.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.indptr[u + 1] - self.indptr[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub(crate) fn with_parts(
        indptr: Vec<usize>,
        indices: Vec<usize>,
        features: DenseMatrix,
        labels: Option<Vec<usize>>,
    ) -> Self {
        let g = Self {
            indptr,
            indices,
            features,
            labels,
        };
        debug_assert!(g.validate().is_ok());
        g
    }

    /// Subgraph induced by `node_ids`, relabeled so local id `i` is `node_ids[i]`.
    ///
    /// `scratch` must have length `num_nodes()` and hold `usize::MAX` everywhere; it is
    /// restored before returning.
    pub(crate) fn induced_with_scratch(&self, node_ids: &[usize], scratch: &mut [usize]) -> Self {
        for (local, &global) in node_ids.iter().enumerate() {
            scratch[global] = local;
        }
        let mut indptr = Vec::with_capacity(node_ids.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for &global in node_ids {
            let start = indices.len();
            indices.extend(
                self.neighbors(global)
                    .iter()
                    .map(|&v| scratch[v])
                    .filter(|&l| l != usize::MAX),
            );
            indices[start..].sort_unstable();
            indptr.push(indices.len());
        }
        for &global in node_ids {
            scratch[global] = usize::MAX;
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| node_ids.iter().map(|&i| l[i]).collect());
        Self::with_parts(indptr, indices, self.features.select_rows(node_ids), labels)
    }

    /// Subgraph induced by `node_ids` (which must be unique and in range).
    pub fn induced_subgraph(&self, node_ids: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut scratch = vec![usize::MAX; n];
        for &id in node_ids {
            if id >= n {
                return Err(Error::Range {
                    context: "induced_subgraph".into(),
                    index: id as u64,
                    limit: n as u64,
                });
            }
            if scratch[id] != usize::MAX {
                return Err(Error::Argument(format!("duplicate node id {id}")));
            }
            scratch[id] = 0;
        }
        scratch.fill(usize::MAX);
        Ok(self.induced_with_scratch(node_ids, &mut scratch))
    }
}
