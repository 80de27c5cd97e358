use rand::seq::SliceRandom;
use rand::Rng;

use super::{normalize_adjacency, NormalizedAdjacency, SparseGraph};
use crate::error::{Error, Result};

/// A node-partition batch with its induced subgraph.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    /// Parent-graph ids; local node `i` of `subgraph` is `node_ids[i]`.
    pub node_ids: Vec<usize>,
    pub subgraph: SparseGraph,
    pub normalized: NormalizedAdjacency,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

/// Splits `0..n` into `⌈n / batch_size⌉` groups, contiguous or randomly permuted.
pub fn partition_nodes<R: Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    shuffle: bool,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Random (or contiguous) node partition, each part carrying its induced subgraph
/// and that subgraph's own normalized adjacency.
pub fn sample_batches<R: Rng + ?Sized>(
    g: &SparseGraph,
    batch_size: usize,
    shuffle: bool,
    rng: &mut R,
) -> Result<Vec<MiniBatch>> {
    let parts = partition_nodes(g.num_nodes(), batch_size, shuffle, rng)?;
    let mut scratch = vec![usize::MAX; g.num_nodes()];
    Ok(parts
        .into_iter()
        .map(|node_ids| {
            let subgraph = g.induced_with_scratch(&node_ids, &mut scratch);
            let normalized = normalize_adjacency(&subgraph);
            MiniBatch {
                node_ids,
                subgraph,
                normalized,
            }
        })
        .collect())
}

/// The whole graph as a single batch.
pub fn full_batch(g: &SparseGraph) -> MiniBatch {
    MiniBatch {
        node_ids: (0..g.num_nodes()).collect(),
        subgraph: g.clone(),
        normalized: normalize_adjacency(g),
    }
}
