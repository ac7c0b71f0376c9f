//! Block generators: the wave Hamiltonian and the Maxwell curl operator.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::incidence::{IncidenceMatrix, FACTOR_TOL};
use crate::laplacian::StencilCoefficients;
use crate::lattice::GridSpec;
use crate::linalg::{csr_from_triplets, to_dense};

/// `H = (1/a) [[0, B], [B†, 0]]`, vertex block first.
#[derive(Debug, Clone)]
pub struct BlockHamiltonian {
    matrix: CsrMatrix<f64>,
    spacing: f64,
    n_vertices: usize,
    n_edges: usize,
}

impl BlockHamiltonian {
    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn dense(&self) -> DMatrix<f64> {
        to_dense(&self.matrix)
    }

    pub fn dim(&self) -> usize {
        self.n_vertices + self.n_edges
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }
}

/// Assemble the block generator from a verified incidence matrix.
pub fn assemble_block(b: &IncidenceMatrix) -> Result<BlockHamiltonian> {
    assemble_block_with_tol(b, FACTOR_TOL)
}

pub fn assemble_block_with_tol(b: &IncidenceMatrix, tol: f64) -> Result<BlockHamiltonian> {
    match b.residual() {
        Some(r) if r <= tol => {}
        Some(r) => return Err(Error::Unverified { residual: r, tol }),
        None => return Err(Error::Unverified { residual: f64::INFINITY, tol }),
    }
    let a = b.spacing();
    let nv = b.n_vertices();
    let ne = b.n_edges();
    let mut trips = Vec::with_capacity(2 * b.matrix().nnz());
    for (i, j, v) in b.matrix().triplet_iter() {
        trips.push((i, nv + j, v / a));
        trips.push((nv + j, i, v / a));
    }
    Ok(BlockHamiltonian { matrix: csr_from_triplets(nv + ne, nv + ne, trips), spacing: a, n_vertices: nv, n_edges: ne })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorMetadata {
    pub dim: usize,
    /// Maximum number of nonzeros in any row or column.
    pub sparsity: usize,
    pub hmax: f64,
    pub qubits: u32,
}

pub fn operator_metadata(h: &BlockHamiltonian) -> OperatorMetadata {
    sparse_metadata(h.matrix())
}

pub fn sparse_metadata(m: &CsrMatrix<f64>) -> OperatorMetadata {
    let mut col_counts = vec![0usize; m.ncols()];
    let mut row_max = 0;
    let mut hmax = 0.0f64;
    for row in m.row_iter() {
        let mut count = 0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v != 0.0 {
                count += 1;
                col_counts[j] += 1;
                hmax = hmax.max(v.abs());
            }
        }
        row_max = row_max.max(count);
    }
    let sparsity = row_max.max(col_counts.into_iter().max().unwrap_or(0));
    let dim = m.nrows();
    let qubits = if dim <= 1 { 0 } else { usize::BITS - (dim - 1).leading_zeros() };
    OperatorMetadata { dim, sparsity, hmax, qubits }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateEstimate {
    pub tau: f64,
    /// Gate count in relative units (constant factor set to one).
    pub g: f64,
}

/// `g = τ [n + ln^{5/2}(τ/ε)] ln(τ/ε) / ln ln(τ/ε)` with `τ = s·hmax·t`.
pub fn gate_count_estimate(s: f64, hmax: f64, t: f64, n_qubits: f64, eps: f64) -> Result<GateEstimate> {
    for (name, v) in [("sparsity", s), ("hmax", hmax), ("t", t), ("qubits", n_qubits), ("eps", eps)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let tau = s * hmax * t;
    let l = (tau / eps).ln();
    if l <= 1.0 {
        return Err(Error::Domain(format!("tau/eps = {:.3e} must exceed e", tau / eps)));
    }
    let g = tau * (n_qubits + l.powf(2.5)) * l / l.ln();
    Ok(GateEstimate { tau, g })
}

/// Generator of the lattice Maxwell equations on a 3-D periodic grid.
///
/// Components are stored field by field in the order
/// `E_x, E_y, E_z, B_x, B_y, B_z`, each over the row-major vertex order.
/// The dynamics are `∂E/∂t = ∇×B`, `∂B/∂t = −∇×E`.
#[derive(Debug, Clone)]
pub struct MaxwellOperator {
    generator: CsrMatrix<f64>,
    extent: [usize; 3],
    spacing: f64,
    order: usize,
    derivative: Vec<CsrMatrix<f64>>,
}

impl MaxwellOperator {
    pub fn generator(&self) -> &CsrMatrix<f64> {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Discrete `∂/∂x_d` on scalar fields.
    pub fn derivative(&self, axis: usize) -> &CsrMatrix<f64> {
        &self.derivative[axis]
    }

    /// `Σ |E|² + |B|²` (unweighted lattice sum).
    pub fn energy(&self, fields: &[Complex64]) -> f64 {
        fields.iter().map(|z| z.norm_sqr()).sum()
    }

    /// 2-norms of the discrete divergence of E and of B.
    pub fn divergence(&self, fields: &[Complex64]) -> (f64, f64) {
        let n = self.n_sites();
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut div = vec![Complex64::new(0.0, 0.0); n];
            let mut tmp = vec![Complex64::new(0.0, 0.0); n];
            for d in 0..3 {
                let start = (3 * k + d) * n;
                crate::linalg::spmv_complex(&self.derivative[d], &fields[start..start + n], &mut tmp);
                for (a, b) in div.iter_mut().zip(&tmp) {
                    *a += b;
                }
            }
            *slot = div.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        }
        (out[0], out[1])
    }
}

pub fn maxwell_generator(spec: &GridSpec, deriv: &StencilCoefficients) -> Result<MaxwellOperator> {
    spec.validate()?;
    if spec.dimension() != 3 || (0..3).any(|d| !spec.axis_periodic(d)) {
        return Err(Error::Unsupported("the Maxwell generator needs a 3-D periodic grid".into()));
    }
    let r = deriv.radius() as i64;
    if deriv.derivative() != 1 || (1..=r).any(|j| deriv.get(j) != -deriv.get(-j)) {
        return Err(Error::Config("the Maxwell generator needs an antisymmetric first-derivative stencil".into()));
    }
    let ext = [spec.extent[0], spec.extent[1], spec.extent[2]];
    if ext.iter().any(|&n| (n as i64) <= 2 * r) {
        return Err(Error::Config(format!("every periodic extent must exceed {}", 2 * r)));
    }
    let a = spec.spacing;
    let n: usize = ext.iter().product();
    let index = |c: [i64; 3]| -> usize {
        let w = |i: usize| c[i].rem_euclid(ext[i] as i64) as usize;
        (w(0) * ext[1] + w(1)) * ext[2] + w(2)
    };
    let mut derivative = Vec::with_capacity(3);
    for axis in 0..3 {
        let mut trips = Vec::new();
        for x in 0..ext[0] as i64 {
            for y in 0..ext[1] as i64 {
                for z in 0..ext[2] as i64 {
                    let here = [x, y, z];
                    for j in -r..=r {
                        let w = deriv.get(j);
                        if w != 0.0 {
                            let mut there = here;
                            there[axis] += j;
                            trips.push((index(here), index(there), w / a));
                        }
                    }
                }
            }
        }
        derivative.push(csr_from_triplets(n, n, trips));
    }
    // Row block, column block, derivative axis, sign.
    const PATTERN: [(usize, usize, usize, f64); 12] = [
        (0, 5, 1, 1.0),
        (0, 4, 2, -1.0),
        (1, 3, 2, 1.0),
        (1, 5, 0, -1.0),
        (2, 4, 0, 1.0),
        (2, 3, 1, -1.0),
        (3, 2, 1, -1.0),
        (3, 1, 2, 1.0),
        (4, 0, 2, -1.0),
        (4, 2, 0, 1.0),
        (5, 1, 0, -1.0),
        (5, 0, 1, 1.0),
    ];
    let mut trips = Vec::new();
    for (rb, cb, axis, sign) in PATTERN {
        for (i, j, v) in derivative[axis].triplet_iter() {
            trips.push((rb * n + i, cb * n + j, sign * v));
        }
    }
    Ok(MaxwellOperator {
        generator: csr_from_triplets(6 * n, 6 * n, trips),
        extent: ext,
        spacing: a,
        order: deriv.accuracy(),
        derivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_count_is_ceil_log2() {
        let m = |dim: usize| {
            let trips = (0..dim).map(|i| (i, i, 1.0));
            sparse_metadata(&csr_from_triplets(dim, dim, trips)).qubits
        };
        assert_eq!(m(1), 0);
        assert_eq!(m(2), 1);
        assert_eq!(m(9), 4);
        assert_eq!(m(16), 4);
    }

    #[test]
    fn gate_domain_error() {
        assert!(matches!(gate_count_estimate(2.0, 1.0, 1.0, 3.0, 1.0), Err(Error::Domain(_))));
        assert!(gate_count_estimate(2.0, 1.0, 1.0, 3.0, 1e-3).is_ok());
    }
}
