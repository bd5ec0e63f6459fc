use super::{Matrix, NumericsError};

/// Compressed sparse row matrix. Column indices within a row are strictly
/// increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(col, value)` lists. Rows are sorted by column;
    /// duplicate columns within a row are rejected.
    pub fn from_row_lists(
        n_cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, NumericsError> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (r, mut entries) in rows.into_iter().enumerate() {
            entries.sort_by_key(|&(c, _)| c);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(NumericsError::DuplicateEntry { row: r, col: w[0].0 });
                }
            }
            for (c, v) in entries {
                if c >= n_cols {
                    return Err(NumericsError::IndexOutOfBounds { index: c, bound: n_cols });
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// `self · dense`, gathering along each sparse row in column order.
    pub fn mul_dense(&self, dense: &Matrix) -> Result<Matrix, NumericsError> {
        if self.n_cols != dense.rows() {
            return Err(NumericsError::Shape {
                op: "sparse_mul_dense",
                left: (self.n_rows, self.n_cols),
                right: dense.shape(),
            });
        }
        let width = dense.cols();
        let mut out = Matrix::zeros(self.n_rows, width);
        for r in 0..self.n_rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, scattering each sparse row into the output.
    pub fn transpose_mul_dense(&self, dense: &Matrix) -> Result<Matrix, NumericsError> {
        if self.n_rows != dense.rows() {
            return Err(NumericsError::Shape {
                op: "sparse_transpose_mul_dense",
                left: (self.n_cols, self.n_rows),
                right: dense.shape(),
            });
        }
        let width = dense.cols();
        let mut out = Matrix::zeros(self.n_cols, width);
        for r in 0..self.n_rows {
            let src = dense.row(r).to_vec();
            for (c, v) in self.row(r) {
                for (o, x) in out.row_mut(c).iter_mut().zip(&src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Exact structural and value symmetry check.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}
