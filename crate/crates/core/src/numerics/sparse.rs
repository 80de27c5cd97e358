use rayon::prelude::*;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles a CSR matrix, checking offsets and strictly increasing column indices.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 || indptr[n_rows] != indices.len() {
            return Err(Error::shape(
                "CsrMatrix offsets",
                format!(
                    "{} monotone offsets ending at {}",
                    n_rows + 1,
                    indices.len()
                ),
                format!("{} offsets", indptr.len()),
            ));
        }
        if values.len() != indices.len() {
            return Err(Error::shape(
                "CsrMatrix values",
                indices.len(),
                values.len(),
            ));
        }
        for r in 0..n_rows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::Argument(format!("CSR offsets decrease at row {r}")));
            }
            let cols = &indices[indptr[r]..indptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "CSR column indices not strictly increasing in row {r}"
                )));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::Range {
                        context: format!("CSR row {r}"),
                        index: c as u64,
                        limit: n_cols as u64,
                    });
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and weights of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Stored weight at `(r, c)`, or zero.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |i| vals[i])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Sparse × dense product.
pub fn spmm(a: &CsrMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != x.rows() {
        return Err(Error::shape(
            "spmm",
            format!("dense operand with {} rows", a.cols()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    let d = x.cols();
    let mut out = DenseMatrix::zeros(a.rows(), d);
    if d == 0 {
        return Ok(out);
    }
    let kernel = |(r, out_row): (usize, &mut [f64])| {
        let (cols, vals) = a.row(r);
        for (&c, &w) in cols.iter().zip(vals) {
            for (o, &v) in out_row.iter_mut().zip(x.row(c)) {
                *o += w * v;
            }
        }
    };
    if a.nnz() * d >= 1 << 16 {
        out.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(kernel);
    } else {
        out.as_mut_slice()
            .chunks_mut(d)
            .enumerate()
            .for_each(kernel);
    }
    Ok(out)
}
