//! Incidence-matrix factorizations `B B† = L`.
//!
//! Radius-1 operators use the signed graph incidence matrix. Higher orders
//! use circulant hyperedge ansätze whose coefficients solve a system of
//! quadratic equations; the solver is a damped Gauss-Newton iteration run from
//! many random starts.
//!
//! Every column carries metadata: the vertices it touches, the lattice axis
//! it acts along, an anchor coordinate and a `drive`. For a field `f`
//! sampled at the anchors, `(B f)_i ≈ a · drive · ∂f/∂x_axis`, which is what
//! the travelling-packet initializer needs.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{
    assemble_1d_with, assemble_multid_with, graph_laplacian, stencil_laplacian_2d, DirichletRule, DiscreteLaplacian,
    Ends, StencilCoefficients,
};
use crate::lattice::{LatticeGraph, Side, Wall};
use crate::linalg::{csr_from_triplets, to_dense};

/// Residual threshold for accepting a factorization.
pub const FACTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzForm {
    /// `B = Σ_{j=1..N} b_j (I − S^j)`.
    ShiftDifference,
    /// `B = Σ_{j=0..N} b_j S^j` with `Bᵀ B = L`.
    Signed,
    /// Two-block ansatz for the smoothed 2-D stencil.
    Stencil2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSolution {
    pub form: AnsatzForm,
    pub coefficients: Vec<(String, f64)>,
    /// Max-abs of `B B† − L` over all stencil offsets.
    pub residual: f64,
    pub target: Option<StencilCoefficients>,
}

impl AnsatzSolution {
    pub fn values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|(_, v)| *v).collect()
    }

    /// Column pattern `(row offset, value)` of a 1-D form.
    pub fn pattern(&self) -> Result<Vec<(i64, f64)>> {
        let b = self.values();
        match self.form {
            AnsatzForm::ShiftDifference => {
                let mut p = vec![(0, b.iter().sum())];
                p.extend(b.iter().enumerate().map(|(j, v)| (j as i64 + 1, -v)));
                Ok(p)
            }
            AnsatzForm::Signed => Ok(b.iter().enumerate().map(|(j, v)| (-(j as i64), *v)).collect()),
            AnsatzForm::Stencil2d => Err(Error::Unsupported("the 2-D stencil ansatz has no 1-D pattern".into())),
        }
    }

    /// Derivative strength `−Σ offset·value` of a column (equal to `Σ_j j·b_j`).
    pub fn moment(&self) -> f64 {
        self.pattern().map(|p| -p.iter().map(|(o, v)| *o as f64 * v).sum::<f64>()).unwrap_or(0.0)
    }
}

/// Rewrite a radius-2 shift-difference root as `c S − (c+b) I + b S†`.
///
/// Multiplying `B` on the right by a shift permutes its columns and leaves
/// `B B†` alone; doing so maps `(b₁, b₂)` to `c = −b₂`, `b = b₁ + b₂`
/// (up to an overall sign).
pub fn centered_pair(sol: &AnsatzSolution) -> Option<(f64, f64)> {
    if sol.form != AnsatzForm::ShiftDifference || sol.coefficients.len() != 2 {
        return None;
    }
    let v = sol.values();
    Some((-v[1], v[0] + v[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub starts: usize,
    pub seed: u64,
    pub iterations: usize,
    /// Starts are drawn uniformly from `[-range, range]` per unknown.
    pub range: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { starts: 64, seed: 0x5eed_cafe, iterations: 100, range: 2.0 }
    }
}

/// Which families of columns share a quadratic form: each family is a list
/// of `(displacement, linear form over the unknowns)`.
type Family = Vec<(Vec<i64>, Vec<f64>)>;

struct QuadraticSystem {
    /// One symmetric matrix per equation.
    forms: Vec<DMatrix<f64>>,
    targets: Vec<f64>,
    /// `(displacement, target)` for every offset, used for the residual.
    all_offsets: Vec<(Vec<i64>, f64)>,
    families: Vec<Family>,
}

fn autocorrelation(families: &[Family], delta: &[i64], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for fam in families {
        for (u, pu) in fam {
            let shifted: Vec<i64> = u.iter().zip(delta).map(|(a, b)| a + b).collect();
            if let Some((_, pv)) = fam.iter().find(|(v, _)| *v == shifted) {
                let a: f64 = pu.iter().zip(x).map(|(c, xi)| c * xi).sum();
                let b: f64 = pv.iter().zip(x).map(|(c, xi)| c * xi).sum();
                total += a * b;
            }
        }
    }
    total
}

impl QuadraticSystem {
    fn new(families: Vec<Family>, target: impl Fn(&[i64]) -> f64, unknowns: usize) -> Self {
        let mut deltas: Vec<Vec<i64>> = Vec::new();
        for fam in &families {
            for (u, _) in fam {
                for (v, _) in fam {
                    let d: Vec<i64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
                    if !deltas.contains(&d) {
                        deltas.push(d);
                    }
                }
            }
        }
        deltas.sort();
        let all_offsets: Vec<(Vec<i64>, f64)> = deltas.iter().map(|d| (d.clone(), target(d))).collect();
        // Keep one of each ±δ pair: the lexicographically non-negative one.
        let half: Vec<Vec<i64>> =
            deltas.into_iter().filter(|d| d.iter().find(|&&c| c != 0).is_none_or(|&c| c > 0)).collect();
        let mut forms = Vec::new();
        let mut targets = Vec::new();
        for d in &half {
            let mut q = DMatrix::zeros(unknowns, unknowns);
            for fam in &families {
                for (u, pu) in fam {
                    let shifted: Vec<i64> = u.iter().zip(d).map(|(a, b)| a + b).collect();
                    if let Some((_, pv)) = fam.iter().find(|(v, _)| *v == shifted) {
                        let a = DVector::from_column_slice(pu);
                        let b = DVector::from_column_slice(pv);
                        q += (&a * b.transpose() + &b * a.transpose()) * 0.5;
                    }
                }
            }
            forms.push(q);
            targets.push(target(d));
        }
        QuadraticSystem { forms, targets, all_offsets, families }
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.forms.len(), self.forms.iter().zip(&self.targets).map(|(q, t)| x.dot(&(q * x)) - t))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.forms.len(), x.len());
        for (r, q) in self.forms.iter().enumerate() {
            let g = q * x * 2.0;
            j.set_row(r, &g.transpose());
        }
        j
    }

    fn residual(&self, x: &[f64]) -> f64 {
        self.all_offsets.iter().map(|(d, t)| (autocorrelation(&self.families, d, x) - t).abs()).fold(0.0, f64::max)
    }

    fn newton(&self, mut x: DVector<f64>, iterations: usize) -> (DVector<f64>, f64) {
        let mut f = self.eval(&x);
        let mut norm = f.norm();
        for _ in 0..iterations {
            if norm < 1e-14 {
                break;
            }
            let j = self.jacobian(&x);
            let step = match j.svd(true, true).solve(&(-&f), 1e-13) {
                Ok(s) => s,
                Err(_) => break,
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-6 {
                let trial = &x + &step * lambda;
                let ft = self.eval(&trial);
                let nt = ft.norm();
                if nt < norm {
                    x = trial;
                    f = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (x, norm)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-9 {
            return x.partial_cmp(y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

/// Run the multi-start solver and return distinct roots, canonical first.
///
/// Roots are ordered descending lexicographically, so the first one has the
/// largest leading coefficient (positive, since `x ↦ −x` maps roots to roots).
fn solve_system(sys: &QuadraticSystem, unknowns: usize, opts: &NewtonOptions) -> (Vec<Vec<f64>>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut best = f64::INFINITY;
    for _ in 0..opts.starts {
        let x0 = DVector::from_fn(unknowns, |_, _| rng.gen_range(-opts.range..opts.range));
        let (x, _) = sys.newton(x0, opts.iterations);
        let xs: Vec<f64> = x.iter().copied().collect();
        let res = sys.residual(&xs);
        best = best.min(res);
        if res <= 1e-11 && !roots.iter().any(|r| r.iter().zip(&xs).all(|(a, b)| (a - b).abs() < 1e-5)) {
            roots.push(xs);
        }
    }
    roots.sort_by(|a, b| lexicographic(b, a));
    (roots, best)
}

fn one_d_families(form: AnsatzForm, n: usize) -> (Vec<Family>, Vec<String>) {
    match form {
        AnsatzForm::ShiftDifference => {
            let mut fam: Family = vec![(vec![0], vec![1.0; n])];
            for j in 0..n {
                let mut f = vec![0.0; n];
                f[j] = -1.0;
                fam.push((vec![j as i64 + 1], f));
            }
            (vec![fam], (1..=n).map(|j| format!("b{j}")).collect())
        }
        _ => {
            let fam: Family = (0..=n)
                .map(|j| {
                    let mut f = vec![0.0; n + 1];
                    f[j] = 1.0;
                    (vec![-(j as i64)], f)
                })
                .collect();
            (vec![fam], (0..=n).map(|j| format!("b{j}")).collect())
        }
    }
}

/// Solve a 1-D circulant ansatz for a symmetric second-derivative family.
/// Returns the canonical root.
pub fn solve_circulant_ansatz(coefs: &StencilCoefficients, form: AnsatzForm) -> Result<AnsatzSolution> {
    solve_circulant_ansatz_all(coefs, form, &NewtonOptions::default())?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Factorization { message: "no root".into(), best_residual: f64::INFINITY })
}

/// Every distinct root found, canonical first.
pub fn solve_circulant_ansatz_all(
    coefs: &StencilCoefficients,
    form: AnsatzForm,
    opts: &NewtonOptions,
) -> Result<Vec<AnsatzSolution>> {
    if form == AnsatzForm::Stencil2d {
        return Err(Error::Unsupported("use solve_stencil_ansatz_2d for the 2-D stencil".into()));
    }
    if coefs.derivative() != 2 || !coefs.is_symmetric() {
        return Err(Error::Config("the ansatz targets a symmetric second-derivative family".into()));
    }
    let n = coefs.radius();
    if n > 5 {
        return Err(Error::Unsupported(format!("radius {n} exceeds the supported maximum of 5")));
    }
    let (families, names) = one_d_families(form, n);
    let unknowns = names.len();
    let sys = QuadraticSystem::new(families, |d| -coefs.get(d[0]), unknowns);
    let (roots, best) = solve_system(&sys, unknowns, opts);
    if roots.is_empty() {
        return Err(Error::Factorization {
            message: format!("no root after {} starts", opts.starts),
            best_residual: best,
        });
    }
    Ok(roots
        .into_iter()
        .map(|x| AnsatzSolution {
            form,
            residual: sys.residual(&x),
            coefficients: names.iter().cloned().zip(x).collect(),
            target: Some(coefs.clone()),
        })
        .collect())
}

const STENCIL_NAMES: [&str; 6] = ["b[1,0]", "b[-1,0]", "b[0,1]", "b[0,-1]", "c[1]", "c[-1]"];

/// Offsets of the 2-D stencil in the positive-semidefinite convention.
fn stencil_target(d: &[i64]) -> f64 {
    match (d[0].abs(), d[1].abs()) {
        (0, 0) => 6.0,
        (1, 0) | (0, 1) => -26.0 / 15.0,
        (1, 1) => 0.1,
        (2, 0) | (0, 2) => 2.0 / 15.0,
        _ => 0.0,
    }
}

/// The two-block system: `Σ_{|j|+|k|=1} b_{j,k}(I − S^j⊗S^k)` next to
/// `Σ_{j=±1} c_j (I − I⊗S^j)`. The second block acts along the same
/// tensor factor as `b_{0,±1}`.
fn stencil_system() -> QuadraticSystem {
    let unit = |i: usize, s: f64| {
        let mut f = vec![0.0; 6];
        f[i] = s;
        f
    };
    let left: Family = vec![
        (vec![0, 0], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]),
        (vec![1, 0], unit(0, -1.0)),
        (vec![-1, 0], unit(1, -1.0)),
        (vec![0, 1], unit(2, -1.0)),
        (vec![0, -1], unit(3, -1.0)),
    ];
    let right: Family = vec![
        (vec![0, 0], vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
        (vec![0, 1], unit(4, -1.0)),
        (vec![0, -1], unit(5, -1.0)),
    ];
    QuadraticSystem::new(vec![left, right], stencil_target, 6)
}

/// Closed-form root of the 2-D stencil ansatz, with its residual.
pub fn solve_stencil_ansatz_2d() -> Result<AnsatzSolution> {
    let r345 = 345f64.sqrt();
    let r1794 = 1794f64.sqrt();
    let b01 = ((-r345 - 15.0) / 5.0 + 3.0) / 46.0;
    let b10 = (-r345 - 15.0) / 30.0;
    let c1 = (-2.0 * r1794 - 69.0) / 138.0;
    let x = [b10, b10 + 1.0, b01, b01, c1, c1 + 1.0];
    let sys = stencil_system();
    let residual = sys.residual(&x);
    if residual > FACTOR_TOL {
        return Err(Error::Factorization { message: "closed form does not verify".into(), best_residual: residual });
    }
    Ok(AnsatzSolution {
        form: AnsatzForm::Stencil2d,
        coefficients: STENCIL_NAMES.iter().map(|s| s.to_string()).zip(x).collect(),
        residual,
        target: None,
    })
}

/// All roots of the 2-D stencil ansatz found by the multi-start solver.
pub fn solve_stencil_ansatz_2d_all(opts: &NewtonOptions) -> Result<Vec<AnsatzSolution>> {
    let sys = stencil_system();
    let (roots, best) = solve_system(&sys, 6, opts);
    if roots.is_empty() {
        return Err(Error::Factorization { message: "no stencil root".into(), best_residual: best });
    }
    Ok(roots
        .into_iter()
        .map(|x| AnsatzSolution {
            form: AnsatzForm::Stencil2d,
            residual: sys.residual(&x),
            coefficients: STENCIL_NAMES.iter().map(|s| s.to_string()).zip(x).collect(),
            target: None,
        })
        .collect())
}

/// Column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnInfo {
    pub vertices: Vec<usize>,
    pub axis: Option<usize>,
    /// Lattice coordinate (possibly virtual) where a transported field is sampled.
    pub anchor: Vec<f64>,
    /// Centre of the hyperedge in lattice coordinates.
    pub centre: Vec<f64>,
    pub drive: f64,
}

#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    matrix: CsrMatrix<f64>,
    columns: Vec<ColumnInfo>,
    spacing: f64,
    residual: Option<f64>,
}

impl IncidenceMatrix {
    /// Wrap a raw matrix. Columns get no geometric metadata and the matrix is unverified.
    pub fn from_matrix(matrix: CsrMatrix<f64>, spacing: f64) -> Self {
        let mut members = vec![Vec::new(); matrix.ncols()];
        for (i, j, _) in matrix.triplet_iter() {
            members[j].push(i);
        }
        let columns = members
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                ColumnInfo { vertices: v, axis: None, anchor: Vec::new(), centre: Vec::new(), drive: 0.0 }
            })
            .collect();
        IncidenceMatrix { matrix, columns, spacing, residual: None }
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn dense(&self) -> DMatrix<f64> {
        to_dense(&self.matrix)
    }

    pub fn columns(&self) -> &[ColumnInfo] {
        &self.columns
    }

    pub fn n_vertices(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Residual against the paired Laplacian, if verified.
    pub fn residual(&self) -> Option<f64> {
        self.residual
    }

    /// Check against `l` and record the residual.
    pub fn verify(mut self, l: &DiscreteLaplacian, tol: f64) -> Result<(Self, ResidualReport)> {
        let report = verify_factorization(&self, l, tol)?;
        self.residual = Some(report.max_abs);
        Ok((self, report))
    }

    fn verified(self, l: &DiscreteLaplacian) -> Result<Self> {
        Ok(self.verify(l, FACTOR_TOL)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub frobenius: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Max-abs and Frobenius norms of `B Bᵀ − L`.
pub fn verify_factorization(b: &IncidenceMatrix, l: &DiscreteLaplacian, tol: f64) -> Result<ResidualReport> {
    if b.n_vertices() != l.dim() {
        return Err(Error::Dimension(format!("B has {} rows, L is {}×{}", b.n_vertices(), l.dim(), l.dim())));
    }
    let diff = &(b.matrix() * &b.matrix().transpose()) - l.matrix();
    let max_abs = diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let frobenius = diff.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(ResidualReport { max_abs, frobenius, tol, passed: max_abs <= tol })
}

/// Signed incidence matrix of a graph, with self loops.
///
/// Columns are emitted vertex by vertex: the vertex's self loop first, then
/// the edges for which it is the source.
pub fn graph_incidence(graph: &LatticeGraph) -> IncidenceMatrix {
    let mut trips = Vec::new();
    let mut columns = Vec::new();
    let coord = |v: usize| -> Vec<f64> { graph.coordinate(v).iter().map(|&c| c as f64).collect() };
    let mut loops = graph.self_loops().iter().peekable();
    let mut by_src: Vec<_> = graph.edges().iter().collect();
    by_src.sort_by_key(|e| e.src);
    let mut edges = by_src.into_iter().peekable();
    for v in 0..graph.num_vertices() {
        while let Some(l) = loops.next_if(|l| l.vertex == v) {
            let col = columns.len();
            trips.push((v, col, l.weight.sqrt()));
            let base = coord(v);
            let info = match l.walls.as_slice() {
                [(axis, side)] => {
                    let mut anchor = base.clone();
                    let mut centre = base.clone();
                    let drive = match side {
                        Side::Lo => {
                            anchor[*axis] -= 1.0;
                            centre[*axis] -= 0.5;
                            -1.0
                        }
                        Side::Hi => {
                            centre[*axis] += 0.5;
                            1.0
                        }
                    };
                    ColumnInfo { vertices: vec![v], axis: Some(*axis), anchor, centre, drive: drive * l.weight.sqrt() }
                }
                _ => ColumnInfo { vertices: vec![v], axis: None, anchor: base.clone(), centre: base, drive: 0.0 },
            };
            columns.push(info);
        }
        while let Some(e) = edges.next_if(|e| e.src == v) {
            let col = columns.len();
            let w = e.weight.sqrt();
            trips.push((e.src, col, w));
            trips.push((e.dst, col, -w));
            let lower = if e.forward { e.src } else { e.dst };
            let anchor = coord(lower);
            let mut centre = anchor.clone();
            centre[e.axis] += 0.5;
            let drive = if e.forward { w } else { -w };
            columns.push(ColumnInfo { vertices: vec![e.src, e.dst], axis: Some(e.axis), anchor, centre, drive });
        }
    }
    let n = graph.num_vertices();
    let matrix = csr_from_triplets(n, columns.len(), trips);
    let b = IncidenceMatrix { matrix, columns, spacing: graph.spacing(), residual: None };
    let l = graph_laplacian(graph);
    let report = verify_factorization(&b, &l, FACTOR_TOL).expect("dimensions agree by construction");
    IncidenceMatrix { residual: Some(report.max_abs), ..b }
}

struct LocalColumn {
    entries: Vec<(usize, f64)>,
    anchor: f64,
    centre: f64,
    drive: f64,
}

fn chain_columns(pattern: &[(i64, f64)], n: usize, ends: Ends, rule: DirichletRule) -> Result<Vec<LocalColumn>> {
    let lo_off = pattern.iter().map(|p| p.0).min().unwrap_or(0);
    let hi_off = pattern.iter().map(|p| p.0).max().unwrap_or(0);
    let width = hi_off - lo_off;
    let drive: f64 = -pattern.iter().map(|(o, v)| *o as f64 * v).sum::<f64>();
    let mid = 0.5 * (lo_off + hi_off) as f64;
    let ni = n as i64;
    let mut out = Vec::new();
    match ends {
        Ends::Periodic => {
            if ni <= 2 * width {
                return Err(Error::Config(format!("periodic chain of {n} vertices is too short for width {width}")));
            }
            for k in 0..ni {
                let mut entries: Vec<(usize, f64)> =
                    pattern.iter().map(|(o, v)| ((k + o).rem_euclid(ni) as usize, *v)).collect();
                entries.sort_by_key(|e| e.0);
                out.push(LocalColumn { entries, anchor: k as f64, centre: k as f64 + mid, drive });
            }
        }
        Ends::Open(lo, hi) => {
            if n == 0 {
                return Err(Error::Config("empty chain".into()));
            }
            if width > 1 && (lo == Wall::Neumann || hi == Wall::Neumann) {
                return Err(Error::Unsupported("Neumann walls are only symmetric for the radius-1 Laplacian".into()));
            }
            if width > 1 && rule == DirichletRule::OddReflection {
                let m = 2 * (ni + 1);
                let reflect = |x: f64| if x > (ni + 1) as f64 { m as f64 - x } else { x };
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for k in 0..m {
                    let mut acc = vec![0.0; n];
                    for (o, v) in pattern {
                        let r = (k + o).rem_euclid(m);
                        if (1..=ni).contains(&r) {
                            acc[(r - 1) as usize] += v * s;
                        } else if r > ni + 1 {
                            acc[(m - r - 1) as usize] -= v * s;
                        }
                    }
                    let entries: Vec<(usize, f64)> =
                        acc.into_iter().enumerate().filter(|(_, v)| v.abs() > 1e-15).collect();
                    if entries.is_empty() {
                        continue;
                    }
                    out.push(LocalColumn {
                        entries,
                        anchor: reflect(k as f64) - 1.0,
                        centre: reflect(k as f64 + mid) - 1.0,
                        drive: drive * std::f64::consts::SQRT_2,
                    });
                }
            } else {
                for k in -hi_off..ni - lo_off {
                    let mut entries = Vec::new();
                    let mut clipped_lo = false;
                    let mut clipped_hi = false;
                    for (o, v) in pattern {
                        let r = k + o;
                        if r < 0 {
                            clipped_lo = true;
                        } else if r >= ni {
                            clipped_hi = true;
                        } else {
                            entries.push((r as usize, *v));
                        }
                    }
                    // At a Neumann wall the columns that reach past it are dropped.
                    if (clipped_lo && lo == Wall::Neumann) || (clipped_hi && hi == Wall::Neumann) || entries.is_empty()
                    {
                        continue;
                    }
                    entries.sort_by_key(|e| e.0);
                    out.push(LocalColumn { entries, anchor: k as f64, centre: k as f64 + mid, drive });
                }
            }
        }
    }
    Ok(out)
}

fn target_of(sol: &AnsatzSolution) -> Result<&StencilCoefficients> {
    sol.target.as_ref().ok_or_else(|| Error::Config("ansatz solution carries no target stencil".into()))
}

/// Incidence matrix of a 1-D ansatz on `n` vertices with spacing `a`.
pub fn build_1d_incidence(sol: &AnsatzSolution, n: usize, ends: Ends, a: f64) -> Result<IncidenceMatrix> {
    build_1d_incidence_with(sol, n, ends, a, DirichletRule::default())
}

pub fn build_1d_incidence_with(
    sol: &AnsatzSolution,
    n: usize,
    ends: Ends,
    a: f64,
    rule: DirichletRule,
) -> Result<IncidenceMatrix> {
    let pattern = sol.pattern()?;
    let cols = chain_columns(&pattern, n, ends, rule)?;
    let mut trips = Vec::new();
    let mut columns = Vec::with_capacity(cols.len());
    for (c, col) in cols.into_iter().enumerate() {
        trips.extend(col.entries.iter().map(|&(r, v)| (r, c, v)));
        columns.push(ColumnInfo {
            vertices: col.entries.iter().map(|e| e.0).collect(),
            axis: Some(0),
            anchor: vec![col.anchor],
            centre: vec![col.centre],
            drive: col.drive,
        });
    }
    let matrix = csr_from_triplets(n, columns.len(), trips);
    let l = assemble_1d_with(target_of(sol)?, n, ends, a, rule)?;
    IncidenceMatrix { matrix, columns, spacing: a, residual: None }.verified(&l)
}

/// Incidence matrix of a 1-D ansatz applied along every axis chain of a graph.
pub fn lattice_incidence(sol: &AnsatzSolution, graph: &LatticeGraph, rule: DirichletRule) -> Result<IncidenceMatrix> {
    let pattern = sol.pattern()?;
    let mut trips = Vec::new();
    let mut columns = Vec::new();
    for axis in 0..graph.dimension() {
        for chain in graph.chains(axis) {
            let ends = match chain.ends {
                None => Ends::Periodic,
                Some((lo, hi)) => Ends::Open(lo, hi),
            };
            let base: Vec<f64> = graph.coordinate(chain.vertices[0]).iter().map(|&c| c as f64).collect();
            for col in chain_columns(&pattern, chain.vertices.len(), ends, rule)? {
                let c = columns.len();
                let vertices: Vec<usize> = col.entries.iter().map(|e| chain.vertices[e.0]).collect();
                trips.extend(col.entries.iter().map(|&(r, v)| (chain.vertices[r], c, v)));
                let mut anchor = base.clone();
                anchor[axis] += col.anchor;
                let mut centre = base.clone();
                centre[axis] += col.centre;
                columns.push(ColumnInfo { vertices, axis: Some(axis), anchor, centre, drive: col.drive });
            }
        }
    }
    let n = graph.num_vertices();
    let matrix = csr_from_triplets(n, columns.len(), trips);
    let l = assemble_multid_with(target_of(sol)?, graph, rule)?;
    IncidenceMatrix { matrix, columns, spacing: graph.spacing(), residual: None }.verified(&l)
}

/// Incidence matrix of the 2-D stencil ansatz on an `n0 × n1` torus.
pub fn build_stencil_incidence_2d(sol: &AnsatzSolution, n0: usize, n1: usize, a: f64) -> Result<IncidenceMatrix> {
    if sol.form != AnsatzForm::Stencil2d {
        return Err(Error::Config("expected a 2-D stencil solution".into()));
    }
    let x = sol.values();
    let blocks: [Vec<([i64; 2], f64)>; 2] = [
        vec![([0, 0], x[0] + x[1] + x[2] + x[3]), ([1, 0], -x[0]), ([-1, 0], -x[1]), ([0, 1], -x[2]), ([0, -1], -x[3])],
        vec![([0, 0], x[4] + x[5]), ([0, 1], -x[4]), ([0, -1], -x[5])],
    ];
    let l = stencil_laplacian_2d(n0, n1, a)?;
    let (m0, m1) = (n0 as i64, n1 as i64);
    let mut trips = Vec::new();
    let mut columns = Vec::new();
    for block in &blocks {
        for i in 0..m0 {
            for j in 0..m1 {
                let c = columns.len();
                let mut vertices = Vec::new();
                for ([di, dj], v) in block {
                    let r = ((i + di).rem_euclid(m0) * m1 + (j + dj).rem_euclid(m1)) as usize;
                    trips.push((r, c, *v));
                    vertices.push(r);
                }
                vertices.sort_unstable();
                let here = vec![i as f64, j as f64];
                columns.push(ColumnInfo { vertices, axis: None, anchor: here.clone(), centre: here, drive: 0.0 });
            }
        }
    }
    let matrix = csr_from_triplets(n0 * n1, columns.len(), trips);
    IncidenceMatrix { matrix, columns, spacing: a, residual: None }.verified(&l)
}

/// Self loops of weight `(m a)²` on every vertex; concatenated after a
/// Laplacian factor they give the Klein-Gordon operator `L + m²a²`.
pub fn mass_loops(n_vertices: usize, m: f64, a: f64) -> Result<IncidenceMatrix> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("mass must be non-negative, got {m}")));
    }
    let w = m * a;
    let matrix = csr_from_triplets(n_vertices, n_vertices, (0..n_vertices).map(|i| (i, i, w)));
    let columns = (0..n_vertices)
        .map(|i| ColumnInfo { vertices: vec![i], axis: None, anchor: Vec::new(), centre: Vec::new(), drive: 0.0 })
        .collect();
    Ok(IncidenceMatrix { matrix, columns, spacing: a, residual: Some(0.0) })
}

/// Place the parts side by side so that `C C† = Σ_d B_d B_d†`.
pub fn concatenate(parts: &[IncidenceMatrix]) -> Result<IncidenceMatrix> {
    let first = parts.first().ok_or_else(|| Error::Config("nothing to concatenate".into()))?;
    let n = first.n_vertices();
    let mut trips = Vec::new();
    let mut columns = Vec::new();
    let mut residual = Some(0.0);
    for p in parts {
        if p.n_vertices() != n {
            return Err(Error::Dimension(format!("parts have {} and {} vertices", n, p.n_vertices())));
        }
        let offset = columns.len();
        trips.extend(p.matrix.triplet_iter().map(|(i, j, v)| (i, j + offset, *v)));
        columns.extend(p.columns.iter().cloned());
        residual = match (residual, p.residual) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
    Ok(IncidenceMatrix {
        matrix: csr_from_triplets(n, columns.len(), trips),
        columns,
        spacing: first.spacing,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::laplacian_coefficients;

    #[test]
    fn radius_one_root_is_one() {
        let sol = solve_circulant_ansatz(&laplacian_coefficients(1).unwrap(), AnsatzForm::ShiftDifference).unwrap();
        assert!((sol.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_pattern_has_zero_sum() {
        let sol = solve_circulant_ansatz(&laplacian_coefficients(3).unwrap(), AnsatzForm::ShiftDifference).unwrap();
        let s: f64 = sol.pattern().unwrap().iter().map(|p| p.1).sum();
        assert!(s.abs() < 1e-14);
    }

    #[test]
    fn stencil_system_residual_of_zero_is_target() {
        let sys = stencil_system();
        assert!((sys.residual(&[0.0; 6]) - 6.0).abs() < 1e-15);
    }
}
