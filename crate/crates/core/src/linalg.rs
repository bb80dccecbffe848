//! Small dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Ordered symmetric eigendecomposition: eigenvalues ascending, each
/// eigenvector scaled so that its largest-magnitude component is positive
/// (the first such component on ties).
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>, context: &str) -> Result<SortedEigen> {
    assert!(m.is_square(), "eigendecomposition of a non-square matrix");
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::EigenFailure {
            context: context.to_string(),
        }
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() * (1.0 + 1e-12) {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok(SortedEigen { values, vectors })
}

pub fn sym_eigenvalues(m: &DMatrix<f64>, context: &str) -> Result<DVector<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::EigenFailure {
            context: context.to_string(),
        }
    })?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(v))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Compressed sparse rows, built from a dense matrix by dropping exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.nrows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        CsrMatrix {
            nrows: m.nrows(),
            ncols: m.ncols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y += alpha * A x`
    pub fn mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi += alpha * acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[p])] = self.values[p];
            }
        }
        m
    }
}

/// Trapezoid weights for a (possibly non-uniform) increasing node list.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Piecewise linear interpolation on increasing nodes, constant outside.
pub fn interp_linear(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let j = nodes.partition_point(|&t| t <= x).max(1) - 1;
    let t = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
    values[j] + t * (values[j + 1] - values[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigen_is_sorted_and_sign_fixed() {
        let m = DMatrix::from_row_slice(2, 2, &[10.0, 1.0, 1.0, 10.0]);
        let e = sym_eigen(&m, "test").unwrap();
        assert_abs_diff_eq!(e.values[0], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 11.0, epsilon = 1e-12);
        for c in 0..2 {
            let col = e.vectors.column(c);
            let big = col.iter().cloned().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn csr_matches_dense() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.0, 3.0, 0.0]);
        let csr = CsrMatrix::from_dense(&m);
        assert_eq!(csr.nnz(), 4);
        assert_eq!(csr.to_dense(), m);
        let x = [1.0, 2.0, 3.0];
        let mut y = vec![1.0; 3];
        csr.mul_add(2.0, &x, &mut y);
        assert_eq!(y, vec![15.0, 1.0, 11.0]);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let xs = [0.0, 0.5, 1.0];
        let ys = [1.0, 3.0, 2.0];
        assert_eq!(interp_linear(&xs, &ys, 0.5), 3.0);
        assert_abs_diff_eq!(interp_linear(&xs, &ys, 0.75), 2.5, epsilon = 1e-15);
        assert_eq!(interp_linear(&xs, &ys, -1.0), 1.0);
    }
}
