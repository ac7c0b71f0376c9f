//! Small sparse/dense helpers shared by the operator modules.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;

/// Largest dimension for which dense eigensolves are attempted.
pub const DENSE_LIMIT: usize = 4096;

/// Assemble a CSR matrix, summing duplicate entries and dropping exact zeros.
pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    let csr = CsrMatrix::from(&coo);
    let kept: Vec<(usize, usize, f64)> =
        csr.triplet_iter().filter(|(_, _, v)| **v != 0.0).map(|(i, j, v)| (i, j, *v)).collect();
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in kept {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

pub fn from_dense(m: &DMatrix<f64>) -> CsrMatrix<f64> {
    let mut trips = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                trips.push((i, j, m[(i, j)]));
            }
        }
    }
    csr_from_triplets(m.nrows(), m.ncols(), trips)
}

/// `out = M x` for a real sparse matrix acting on a complex vector.
pub fn spmv_complex(m: &CsrMatrix<f64>, x: &[Complex64], out: &mut [Complex64]) {
    for (i, row) in m.row_iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            acc += x[j] * v;
        }
        out[i] = acc;
    }
}

pub fn spmv(m: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.nrows());
    for (i, row) in m.row_iter().enumerate() {
        out[i] = row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * x[j]).sum();
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}
