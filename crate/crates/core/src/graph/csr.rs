use crate::linalg::Mat;
use crate::par::{self, ExecMode};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

// Rows below this many multiply-adds are not worth splitting across threads.
const PAR_WORK_THRESHOLD: usize = 1 << 16;

impl Csr {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Csr {
        assert_eq!(indptr.len(), rows + 1);
        assert_eq!(indices.len(), values.len());
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
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

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        Csr::from_parts(self.cols, self.rows, indptr, indices, values)
    }

    /// Divides every row by its sum; empty or zero-sum rows are left as is.
    pub fn row_normalized(&self) -> Csr {
        let mut out = self.clone();
        for i in 0..self.rows {
            let span = self.indptr[i]..self.indptr[i + 1];
            let s: f64 = self.values[span.clone()].iter().sum();
            if s != 0.0 {
                for v in &mut out.values[span] {
                    *v /= s;
                }
            }
        }
        out
    }

    /// Sparse × dense product. Each output row is computed independently, so
    /// serial and parallel modes produce identical bits.
    pub fn spmm(&self, x: &Mat, mode: ExecMode) -> Mat {
        assert_eq!(self.cols, x.rows(), "spmm shape mismatch");
        let d = x.cols();
        let mut out = Mat::zeros(self.rows, d);
        let mode = if self.nnz() * d < PAR_WORK_THRESHOLD {
            ExecMode::Serial
        } else {
            mode
        };
        par::for_each_row(mode, out.as_mut_slice(), d, |i, dst| {
            for (j, v) in self.row(i) {
                for (o, s) in dst.iter_mut().zip(x.row(j)) {
                    *o += v * s;
                }
            }
        });
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Power-iteration estimate of the spectral radius, started from the
    /// all-ones vector.
    pub fn spectral_radius_estimate(&self, iters: usize) -> f64 {
        let mut x = vec![1.0; self.cols];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let y = self.mul_vec(&x);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            lambda = norm / xn;
            x = y.into_iter().map(|v| v / norm).collect();
        }
        lambda
    }
}
