//! Dense materialization of the sparse factor, used as an independent oracle
//! for the convolution-structured operations.

use super::SupnParams;
use crate::error::{Error, Result};

/// Hard cap on materialized problem size; anything larger has no business
/// going through a dense matrix.
const MAX_DENSE_VARS: usize = 4096;

/// A dense lower-triangular matrix, row-major.
#[derive(Debug, Clone)]
pub struct DenseLower {
    n: usize,
    data: Vec<f64>,
}

impl DenseLower {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// L v
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..=i).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    /// L^T v
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|j| (j..self.n).map(|i| self.at(i, j) * v[i]).sum())
            .collect()
    }

    /// Solve L x = b by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.at(i, j) * x[j];
            }
            x[i] = acc / self.at(i, i);
        }
        x
    }

    /// Solve L^T x = b by back substitution.
    pub fn solve_lower_t(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        for j in (0..self.n).rev() {
            let mut acc = b[j];
            for i in j + 1..self.n {
                acc -= self.at(i, j) * x[i];
            }
            x[j] = acc / self.at(j, j);
        }
        x
    }

    /// Full precision matrix Lambda = L L^T.
    pub fn precision(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let upper = i.min(j);
                out[i][j] = (0..=upper).map(|k| self.at(i, k) * self.at(j, k)).sum();
            }
        }
        out
    }

    /// Full covariance matrix (L L^T)^-1, column by column through two
    /// triangular solves. Meant for small oracle instances only.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let w = self.solve_lower(&e);
            cols.push(self.solve_lower_t(&w));
        }
        // cols[j][i] = Sigma[i][j]; transpose into row-major.
        let mut out = vec![vec![0.0; n]; n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                out[i][j] = *v;
            }
        }
        out
    }

    /// Count of exactly-zero entries' complement, i.e. entries that were
    /// actually placed. Strictly structural when the source values are
    /// generically nonzero.
    pub fn count_nonzeros(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

impl SupnParams {
    /// Materialize the sparse factor as an explicit dense lower-triangular
    /// matrix under the global variable order (raster pixels, Cb before Cr).
    pub fn dense_materialize(&self) -> Result<DenseLower> {
        let n = self.num_variables();
        if n > MAX_DENSE_VARS {
            return Err(Error::Invalid(format!(
                "{n} variables exceed the dense materialization cap {MAX_DENSE_VARS}"
            )));
        }
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut data = vec![0.0; n * n];
        for (i, ld) in self.log_diag.data().iter().enumerate() {
            data[i * n + i] = ld.exp();
        }
        for (k, &(dy, dx)) in self.layout.offsets().iter().enumerate() {
            let od = self.off_diag[k].data();
            for py in 0..h {
                for px in 0..w {
                    let ny = py as isize - dy as isize;
                    let nx = px as isize - dx as isize;
                    if ny < 0 || nx < 0 || nx >= w as isize {
                        continue;
                    }
                    let p = py * w + px;
                    let q = ny as usize * w + nx as usize;
                    if c == 1 {
                        data[p * n + q] = od[p];
                    } else {
                        for c_row in 0..2 {
                            for c_col in 0..2 {
                                data[(p * 2 + c_row) * n + (q * 2 + c_col)] =
                                    od[p * 4 + c_row * 2 + c_col];
                            }
                        }
                    }
                }
            }
        }
        if let Some(intra) = &self.intra {
            for (p, v) in intra.data().iter().enumerate() {
                data[(p * 2 + 1) * n + p * 2] = *v;
            }
        }
        Ok(DenseLower { n, data })
    }
}
