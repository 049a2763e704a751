use super::{Result, Tensor, TensorError};

/// Constant CSR matrix used for neighborhood aggregation.
///
/// Entries within a row keep their insertion order, which fixes the
/// floating-point summation order of [`SparseMatrix::matmul`].
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                if c >= cols {
                    return Err(TensorError::Index {
                        op: "sparse",
                        index: c,
                        bound: cols,
                    });
                }
                if !v.is_finite() {
                    return Err(TensorError::NonFinite { op: "sparse" });
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let cur = t.get(r, c);
                t.set(r, c, cur + v);
            }
        }
        t
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        SparseMatrix::from_rows(self.rows, rows).expect("transpose of a valid matrix is valid")
    }

    /// Sparse × dense product.
    pub fn matmul(&self, x: &Tensor) -> Result<Tensor> {
        if self.cols != x.rows() {
            return Err(TensorError::Shape {
                op: "spmm",
                left: (self.rows, self.cols),
                right: x.shape(),
            });
        }
        let n = x.cols();
        let mut out = Tensor::zeros(self.rows, n);
        for r in 0..self.rows {
            let o = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (oj, xj) in o.iter_mut().zip(x.row(c)) {
                    *oj += v * xj;
                }
            }
        }
        Ok(out)
    }
}
