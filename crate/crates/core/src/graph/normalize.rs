use super::SparseGraph;
use crate::numerics::CsrMatrix;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` is the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CsrMatrix::identity(n),
        }
    }
}

impl AsRef<CsrMatrix> for NormalizedAdjacency {
    fn as_ref(&self) -> &CsrMatrix {
        &self.matrix
    }
}

pub fn normalize_adjacency(g: &SparseGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|u| (g.degree(u) + 1) as f64).collect();
    let weight = |u: usize, v: usize| 1.0 / (deg[u] * deg[v]).sqrt();
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::with_capacity(g.indices().len() + n);
    let mut values = Vec::with_capacity(g.indices().len() + n);
    for u in 0..n {
        let mut diagonal_done = false;
        for &v in g.neighbors(u) {
            if !diagonal_done && v > u {
                indices.push(u);
                values.push(weight(u, u));
                diagonal_done = true;
            }
            indices.push(v);
            values.push(weight(u, v));
        }
        if !diagonal_done {
            indices.push(u);
            values.push(weight(u, u));
        }
        indptr.push(indices.len());
    }
    let matrix = CsrMatrix::new(n, n, indptr, indices, values)
        .expect("normalized adjacency inherits a valid CSR layout");
    NormalizedAdjacency { matrix }
}
