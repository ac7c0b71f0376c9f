//! Initial states `[φ_V, φ_E]` for the block dynamics.
//!
//! States are stored with unit 2-norm; the factor that restores the physical
//! amplitude is kept alongside so fields on different lattices can be
//! compared directly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incidence::IncidenceMatrix;
use crate::lattice::LatticeGraph;
use crate::linalg::DENSE_LIMIT;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    amplitudes: DVector<Complex64>,
    n_vertices: usize,
    scale: f64,
}

impl FieldState {
    /// Normalize a physical vector whose first `n_vertices` entries form the vertex block.
    pub fn from_physical(v: DVector<Complex64>, n_vertices: usize) -> Result<Self> {
        if n_vertices > v.len() {
            return Err(Error::Dimension(format!("{} vertices in a vector of length {}", n_vertices, v.len())));
        }
        let scale = v.norm();
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Normalization);
        }
        Ok(FieldState { amplitudes: v / Complex64::from(scale), n_vertices, scale })
    }

    /// Same partition and scale with new (already unit-norm) amplitudes.
    pub fn with_amplitudes(&self, amplitudes: DVector<Complex64>) -> Self {
        FieldState { amplitudes, n_vertices: self.n_vertices, scale: self.scale }
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.amplitudes.len() - self.n_vertices
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn vertex_block(&self) -> &[Complex64] {
        &self.amplitudes.as_slice()[..self.n_vertices]
    }

    pub fn edge_block(&self) -> &[Complex64] {
        &self.amplitudes.as_slice()[self.n_vertices..]
    }

    pub fn physical(&self) -> DVector<Complex64> {
        &self.amplitudes * Complex64::from(self.scale)
    }

    pub fn physical_vertex(&self) -> Vec<Complex64> {
        self.vertex_block().iter().map(|z| z * self.scale).collect()
    }
}

/// Gaussian `exp(−|x − centre|²/σ²)` moving with unit speed along `velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub centre: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub velocity: Vec<f64>,
}

impl GaussianPacket {
    pub fn profile(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.centre).map(|(a, c)| (a - c).powi(2)).sum();
        (-r2 / (self.width * self.width)).exp()
    }
}

/// Where the edge block of a travelling packet samples the waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSampling {
    /// Centre of each hyperedge (edge midpoints for graphs).
    #[default]
    Midpoint,
    /// The column's anchor vertex (the source vertex of a graph edge).
    Anchor,
}

/// `φ_V ∝ φ₀`, `φ_E = 0`.
pub fn static_state(phi0: &[Complex64], n_edges: usize) -> Result<FieldState> {
    let mut v = DVector::zeros(phi0.len() + n_edges);
    v.rows_mut(0, phi0.len()).copy_from_slice(phi0);
    FieldState::from_physical(v, phi0.len())
}

/// Packet that translates rigidly with unit speed along `velocity`.
///
/// The edge block is `φ_E = −i (v·ê_axis) w(x_c) / drive_c` for each column
/// `c`, so that `−(i/a) B φ_E ≈ −v·∇w`. Columns with no axis (corner loops)
/// stay zero. In more than one dimension the packet disperses over time.
pub fn translating_packet(
    w: &dyn Fn(&[f64]) -> f64,
    graph: &LatticeGraph,
    b: &IncidenceMatrix,
    velocity: &[f64],
    sampling: EdgeSampling,
) -> Result<FieldState> {
    if velocity.len() != graph.dimension() {
        return Err(Error::Dimension(format!(
            "velocity has {} components on a {}-dimensional lattice",
            velocity.len(),
            graph.dimension()
        )));
    }
    let speed = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (speed - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("velocity must have unit length, got {speed}")));
    }
    if b.n_vertices() != graph.num_vertices() {
        return Err(Error::Dimension("incidence matrix and graph disagree on the vertex count".into()));
    }
    let nv = graph.num_vertices();
    let mut v = DVector::zeros(nv + b.n_edges());
    for i in 0..nv {
        v[i] = Complex64::from(w(&graph.position(i)));
    }
    for (c, col) in b.columns().iter().enumerate() {
        let Some(axis) = col.axis else { continue };
        if col.drive == 0.0 || velocity[axis] == 0.0 {
            continue;
        }
        let at = match sampling {
            EdgeSampling::Anchor => &col.anchor,
            EdgeSampling::Midpoint => &col.centre,
        };
        let x = graph.position_of(at);
        v[nv + c] = -I * (velocity[axis] * w(&x) / col.drive);
    }
    FieldState::from_physical(v, nv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub phi0: Vec<Complex64>,
    pub phidot0: Vec<Complex64>,
}

impl InitialCondition {
    pub fn real(phi0: &[f64], phidot0: &[f64]) -> Self {
        InitialCondition {
            phi0: phi0.iter().map(|&x| Complex64::from(x)).collect(),
            phidot0: phidot0.iter().map(|&x| Complex64::from(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoinverseDiagnostics {
    /// `‖B B⁺ φ̇₀ − φ̇₀‖`: the part of φ̇₀ in the kernel of B†.
    pub leakage: f64,
    pub sigma_max: f64,
    /// Smallest singular value kept by the cutoff.
    pub sigma_min: f64,
    pub rank: usize,
    pub kappa_b: f64,
}

/// Relative singular-value cutoff of the pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Truncated SVD of a dense incidence matrix.
pub(crate) struct Pseudoinverse {
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma: Vec<f64>,
    pub sigma_max: f64,
}

impl Pseudoinverse {
    pub(crate) fn new(b: &IncidenceMatrix) -> Result<Self> {
        if b.n_vertices().max(b.n_edges()) > DENSE_LIMIT {
            return Err(Error::Unsupported(format!("pseudoinverse limited to {DENSE_LIMIT} rows or columns")));
        }
        let svd = b
            .dense()
            .try_svd(true, true, 1e-15, 10_000)
            .ok_or_else(|| Error::Numerical("SVD of the incidence matrix did not converge".into()))?;
        let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > PINV_CUTOFF * sigma_max).collect();
        let u_full = svd.u.unwrap();
        let vt_full = svd.v_t.unwrap();
        let u = DMatrix::from_fn(u_full.nrows(), keep.len(), |i, k| u_full[(i, keep[k])]);
        let v_t = DMatrix::from_fn(keep.len(), vt_full.ncols(), |k, j| vt_full[(keep[k], j)]);
        let sigma = keep.iter().map(|&k| svd.singular_values[k]).collect();
        Ok(Pseudoinverse { u, v_t, sigma, sigma_max })
    }

    pub(crate) fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub(crate) fn sigma_min(&self) -> f64 {
        self.sigma.iter().fold(f64::INFINITY, |m, s| m.min(*s))
    }

    /// `B⁺ y` for real `y`.
    pub(crate) fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut c = self.u.transpose() * y;
        for (ck, s) in c.iter_mut().zip(&self.sigma) {
            *ck /= s;
        }
        self.v_t.transpose() * c
    }

    /// Orthogonal projection onto the range of B.
    pub(crate) fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.u * (self.u.transpose() * y)
    }
}

/// `φ_V ∝ φ₀`, `φ_E ∝ i a B⁺ φ̇₀`, by truncated-SVD least squares.
pub fn general_state(ic: &InitialCondition, b: &IncidenceMatrix) -> Result<(FieldState, PseudoinverseDiagnostics)> {
    let nv = b.n_vertices();
    if ic.phi0.len() != nv || ic.phidot0.len() != nv {
        return Err(Error::Dimension(format!(
            "initial condition has {} / {} samples for {} vertices",
            ic.phi0.len(),
            ic.phidot0.len(),
            nv
        )));
    }
    let a = b.spacing();
    let pinv = Pseudoinverse::new(b)?;
    let re = DVector::from_iterator(nv, ic.phidot0.iter().map(|z| z.re));
    let im = DVector::from_iterator(nv, ic.phidot0.iter().map(|z| z.im));
    let (x_re, x_im) = (pinv.apply(&re), pinv.apply(&im));
    let leakage = ((pinv.project(&re) - &re).norm_squared() + (pinv.project(&im) - &im).norm_squared()).sqrt();
    let mut v = DVector::zeros(nv + b.n_edges());
    v.rows_mut(0, nv).copy_from_slice(&ic.phi0);
    for j in 0..b.n_edges() {
        v[nv + j] = I * Complex64::new(x_re[j], x_im[j]) * a;
    }
    let diag = PseudoinverseDiagnostics {
        leakage,
        sigma_max: pinv.sigma_max,
        sigma_min: pinv.sigma_min(),
        rank: pinv.rank(),
        kappa_b: pinv.sigma_max / pinv.sigma_min(),
    };
    Ok((FieldState::from_physical(v, nv)?, diag))
}

/// Predicted scaling `√D ℓ / a` of κ(B).
pub fn predicted_kappa(dimension: usize, ell: f64, a: f64) -> f64 {
    (dimension as f64).sqrt() * ell / a
}
