//! Classical integration of `dψ/dt = −iHψ`.
//!
//! `evolve_rk` is an adaptive Dormand–Prince 5(4) integrator with the
//! standard fourth-order continuous extension, so samples land exactly on the
//! requested times. `ExactPropagator` diagonalizes a real symmetric generator
//! once and applies `e^{−iHt}` for any t.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{BlockHamiltonian, MaxwellOperator};
use crate::incidence::IncidenceMatrix;
use crate::initstate::FieldState;
use crate::linalg::{spmv_complex, DENSE_LIMIT};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Linear right-hand side `dψ/dt = G ψ`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    /// Lattice spacing, used for the `Δt < a` rule.
    fn spacing(&self) -> f64;
    fn rate(&self, psi: &[Complex64], out: &mut [Complex64]);
}

impl Generator for BlockHamiltonian {
    fn dim(&self) -> usize {
        BlockHamiltonian::dim(self)
    }

    fn spacing(&self) -> f64 {
        BlockHamiltonian::spacing(self)
    }

    fn rate(&self, psi: &[Complex64], out: &mut [Complex64]) {
        spmv_complex(self.matrix(), psi, out);
        for z in out.iter_mut() {
            *z *= -I;
        }
    }
}

impl Generator for MaxwellOperator {
    fn dim(&self) -> usize {
        MaxwellOperator::dim(self)
    }

    fn spacing(&self) -> f64 {
        MaxwellOperator::spacing(self)
    }

    fn rate(&self, psi: &[Complex64], out: &mut [Complex64]) {
        spmv_complex(self.generator(), psi, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step; must stay below the lattice spacing. `None` means `a/2`.
    pub dt_max: Option<f64>,
    /// Abort when the relative norm drift exceeds this.
    pub max_norm_drift: f64,
}

impl Default for RkOptions {
    fn default() -> Self {
        RkOptions { rtol: 1e-9, atol: 1e-9, dt_max: None, max_norm_drift: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest `|‖ψ(t)‖/‖ψ(0)‖ − 1|` over accepted steps.
    pub norm_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    pub stats: RkStats,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn combine(y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])], out: &mut [Complex64]) {
    for i in 0..y.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrate from `t = 0` through the monotone sample `times`, calling
/// `observe(index, t, ψ(t))` at each sample.
pub fn integrate(
    gen: &dyn Generator,
    psi0: &[Complex64],
    times: &[f64],
    opts: &RkOptions,
    mut observe: impl FnMut(usize, f64, &[Complex64]),
) -> Result<RkStats> {
    let n = gen.dim();
    if psi0.len() != n {
        return Err(Error::Dimension(format!("state length {} for a generator of dimension {n}", psi0.len())));
    }
    let a = gen.spacing();
    let dt_max = opts.dt_max.unwrap_or(0.5 * a);
    if !(dt_max > 0.0 && dt_max < a) {
        return Err(Error::Config(format!("dt_max = {dt_max} must lie in (0, a = {a})")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let t_end = times.iter().copied().fold(0.0f64, |m, t| if t.abs() > m.abs() { t } else { m });
    let dir = if t_end < 0.0 { -1.0 } else { 1.0 };
    if times.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || times.first().is_some_and(|t| t * dir < 0.0) {
        return Err(Error::Config("sample times must be monotone and start on the same side of 0".into()));
    }

    let mut stats = RkStats::default();
    let norm0 = norm(psi0);
    let mut y = psi0.to_vec();
    let mut t = 0.0f64;
    let mut next = 0;
    while next < times.len() && times[next] == 0.0 {
        observe(next, 0.0, &y);
        next += 1;
    }
    if next == times.len() {
        return Ok(stats);
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut k: Vec<Vec<Complex64>> = vec![vec![zero; n]; 7];
    let mut stage = vec![zero; n];
    let mut y_new = vec![zero; n];
    let mut cont = vec![vec![zero; n]; 5];
    let mut out = vec![zero; n];
    gen.rate(&y, &mut k[0]);
    stats.evaluations += 1;

    let scaled = |v: &[Complex64], y: &[Complex64]| -> f64 {
        (v.iter().zip(y).map(|(e, yi)| (e.norm() / (opts.atol + opts.rtol * yi.norm())).powi(2)).sum::<f64>()
            / n as f64)
            .sqrt()
    };
    // Hairer's starting step heuristic.
    let d0 = scaled(&y, &y);
    let d1 = scaled(&k[0], &y);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(dt_max).min(t_end.abs()) * dir;
    let mut last_rejected = false;

    while next < times.len() {
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, h });
        }
        let (k1, rest) = k.split_first_mut().unwrap();
        let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
        combine(&y, h, &[(A21, k1)], &mut stage);
        gen.rate(&stage, k2);
        combine(&y, h, &[(A31, k1), (A32, k2)], &mut stage);
        gen.rate(&stage, k3);
        combine(&y, h, &[(A41, k1), (A42, k2), (A43, k3)], &mut stage);
        gen.rate(&stage, k4);
        combine(&y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], &mut stage);
        gen.rate(&stage, k5);
        combine(&y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], &mut stage);
        gen.rate(&stage, k6);
        combine(&y, h, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)], &mut y_new);
        gen.rate(&y_new, k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = if ((t + h) - t_end).abs() <= 1e-12 * t_end.abs().max(1.0) { t_end } else { t + h };
            // Continuous extension on [t, t+h].
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = k1[i] * h - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - k7[i] * h - bspl;
                cont[4][i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
            }
            while next < times.len() && (times[next] - t_new) * dir <= 0.0 {
                let theta = (times[next] - t) / h;
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    out[i] = cont[0][i]
                        + (cont[1][i] + (cont[2][i] + (cont[3][i] + cont[4][i] * theta1) * theta) * theta1) * theta;
                }
                observe(next, times[next], &out);
                next += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = t_new;
            let drift = (norm(&y) / norm0 - 1.0).abs();
            stats.norm_drift = stats.norm_drift.max(drift);
            if drift > opts.max_norm_drift {
                return Err(Error::Numerical(format!("norm drift {drift:.3e} at t = {t}")));
            }
            let mut fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).abs().min(dt_max) * dir;
            if next < times.len() {
                let remaining = (t_end - t).abs();
                if remaining < h.abs() {
                    h = remaining * dir;
                }
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(stats)
}

/// Trajectory of full states at the sample times.
pub fn evolve_rk(gen: &dyn Generator, state: &FieldState, times: &[f64], opts: &RkOptions) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(times.len());
    let stats = integrate(gen, state.amplitudes().as_slice(), times, opts, |_, _, psi| {
        states.push(state.with_amplitudes(DVector::from_column_slice(psi)));
    })?;
    Ok(Trajectory { times: times.to_vec(), states, stats })
}

/// `e^{−iHt}` for a real symmetric `H`, via one dense eigendecomposition.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl ExactPropagator {
    pub fn new(h: &BlockHamiltonian) -> Result<Self> {
        Self::from_dense(h.dense())
    }

    pub fn from_dense(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() > DENSE_LIMIT {
            return Err(Error::Unsupported(format!("exact evolution is limited to {DENSE_LIMIT} dimensions")));
        }
        let eig = SymmetricEigen::try_new(h, 1e-15, 0)
            .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
        Ok(ExactPropagator { vectors: eig.eigenvectors, values: eig.eigenvalues })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// Coefficients of `ψ` in the eigenbasis.
    pub fn coefficients(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let re = DVector::from_iterator(psi.len(), psi.iter().map(|z| z.re));
        let im = DVector::from_iterator(psi.len(), psi.iter().map(|z| z.im));
        let (cr, ci) = (self.vectors.tr_mul(&re), self.vectors.tr_mul(&im));
        cr.iter().zip(ci.iter()).map(|(r, i)| Complex64::new(*r, *i)).collect()
    }

    /// `e^{−iHt} ψ` given eigenbasis coefficients of `ψ`.
    pub fn from_coefficients(&self, coef: &[Complex64], t: f64) -> Vec<Complex64> {
        let phased: Vec<Complex64> =
            coef.iter().zip(self.values.iter()).map(|(c, l)| c * Complex64::from_polar(1.0, -l * t)).collect();
        let re = DVector::from_iterator(phased.len(), phased.iter().map(|z| z.re));
        let im = DVector::from_iterator(phased.len(), phased.iter().map(|z| z.im));
        let (yr, yi) = (&self.vectors * re, &self.vectors * im);
        yr.iter().zip(yi.iter()).map(|(r, i)| Complex64::new(*r, *i)).collect()
    }

    pub fn apply(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        self.from_coefficients(&self.coefficients(psi), t)
    }

    pub fn propagate(&self, state: &FieldState, t: f64) -> FieldState {
        let out = self.apply(state.amplitudes().as_slice(), t);
        state.with_amplitudes(DVector::from_vec(out))
    }
}

/// `e^{−iHT}` applied through a full eigendecomposition.
pub fn evolve_exact(h: &BlockHamiltonian, state: &FieldState, t: f64) -> Result<FieldState> {
    Ok(ExactPropagator::new(h)?.propagate(state, t))
}

/// Probabilities of finding the state in the vertex and edge subspaces.
pub fn subspace_probabilities(state: &FieldState) -> (f64, f64) {
    let pv: f64 = state.vertex_block().iter().map(|z| z.norm_sqr()).sum();
    let pe: f64 = state.edge_block().iter().map(|z| z.norm_sqr()).sum();
    (pv, pe)
}

/// `dφ/dt = −(i/a) B φ_E` in physical units.
pub fn extract_phi_dot(state: &FieldState, b: &IncidenceMatrix) -> Result<Vec<Complex64>> {
    if state.n_vertices() != b.n_vertices() || state.n_edges() != b.n_edges() {
        return Err(Error::Dimension("state partition does not match the incidence matrix".into()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); b.n_vertices()];
    spmv_complex(b.matrix(), state.edge_block(), &mut out);
    let f = -I * (state.scale() / b.spacing());
    Ok(out.into_iter().map(|z| z * f).collect())
}
