//! Finite-difference coefficient families and Laplacian assembly.
//!
//! All operators use the positive semidefinite convention: the matrix `L`
//! satisfies `-(1/a²) L ≈ ∇²`, so a stencil with second-derivative weights
//! `a_j` contributes `-a_j` to `L`.

use std::fmt;

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, Wall};
use crate::linalg::{csr_from_triplets, to_dense};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rat_to_f64(r: &BigRational) -> f64 {
    // Numerator and denominator stay far below f64 overflow for radius ≤ 32.
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

/// Weights `w_j` on nodes `j = -R..=R` with `f⁽ᵈ⁾(0) ≈ Σ_j w_j f(j)` (unit spacing),
/// obtained by differentiating the Lagrange interpolant exactly.
pub fn lagrange_weights(radius: usize, derivative: usize) -> Vec<BigRational> {
    let r = radius as i64;
    let nodes: Vec<i64> = (-r..=r).collect();
    let mut factorial = BigRational::one();
    for m in 1..=derivative {
        factorial *= rat(m as i64, 1);
    }
    nodes
        .iter()
        .map(|&xk| {
            // Coefficients of Π_{m≠k} (x - x_m), lowest degree first.
            let mut poly = vec![BigRational::one()];
            let mut denom = BigRational::one();
            for &xm in nodes.iter().filter(|&&xm| xm != xk) {
                let mut next = vec![BigRational::zero(); poly.len() + 1];
                for (i, c) in poly.iter().enumerate() {
                    next[i + 1] += c;
                    next[i] -= c * rat(xm, 1);
                }
                poly = next;
                denom *= rat(xk - xm, 1);
            }
            match poly.get(derivative) {
                Some(c) => c * &factorial / denom,
                None => BigRational::zero(),
            }
        })
        .collect()
}

/// Symmetric or antisymmetric difference stencil on `j = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilCoefficients {
    radius: usize,
    derivative: usize,
    accuracy: usize,
    exact: Option<Vec<BigRational>>,
    values: Vec<f64>,
}

impl StencilCoefficients {
    /// Build from exact rationals given for `j = -N..=N`.
    pub fn from_rationals(derivative: usize, accuracy: usize, entries: Vec<BigRational>) -> Result<Self> {
        if entries.len().is_multiple_of(2) || entries.is_empty() {
            return Err(Error::Config("stencil needs an odd number of entries".into()));
        }
        let values = entries.iter().map(rat_to_f64).collect();
        Ok(StencilCoefficients { radius: entries.len() / 2, derivative, accuracy, exact: Some(entries), values })
    }

    /// Symmetric second-derivative stencil from the one-sided list `(a_0, a_1, …, a_N)`.
    pub fn symmetric_second(half: &[(i64, i64)], accuracy: usize) -> Result<Self> {
        let mut entries: Vec<BigRational> = half.iter().rev().map(|&(n, d)| rat(n, d)).collect();
        entries.extend(half.iter().skip(1).map(|&(n, d)| rat(n, d)));
        Self::from_rationals(2, accuracy, entries)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn derivative(&self) -> usize {
        self.derivative
    }

    /// Order k of the truncation error O(a^k).
    pub fn accuracy(&self) -> usize {
        self.accuracy
    }

    /// Coefficient `a_j`, zero outside the radius.
    pub fn get(&self, j: i64) -> f64 {
        let idx = j + self.radius as i64;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    pub fn exact(&self, j: i64) -> Option<&BigRational> {
        let idx = j + self.radius as i64;
        self.exact.as_ref().and_then(|e| e.get(usize::try_from(idx).ok()?))
    }

    /// Entries for `j = -N..=N`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.radius as i64;
        (1..=n).all(|j| self.get(j) == self.get(-j))
    }

    /// Rows `(j, rational, decimal)` with decimals at 12 significant digits.
    pub fn table(&self) -> Vec<(i64, String, String)> {
        let n = self.radius as i64;
        (-n..=n)
            .map(|j| {
                let exact = self.exact(j).map(|r| r.to_string()).unwrap_or_default();
                (j, exact, format!("{:.11e}", self.get(j)))
            })
            .collect()
    }
}

/// Radius-N second-derivative weights in closed form:
/// `a_0 = -2 Σ 1/l²`, `a_k = (1/k²) Π_{l≠k} l²/(l² - k²)`.
pub fn laplacian_coefficients(n: usize) -> Result<StencilCoefficients> {
    if n == 0 {
        return Err(Error::Config("radius must be at least 1".into()));
    }
    let ni = n as i64;
    let mut half = Vec::with_capacity(n + 1);
    let mut a0 = BigRational::zero();
    for l in 1..=ni {
        a0 -= rat(2, l * l);
    }
    half.push(a0);
    for k in 1..=ni {
        let mut ak = rat(1, k * k);
        for l in (1..=ni).filter(|&l| l != k) {
            ak *= rat(l * l, l * l - k * k);
        }
        half.push(ak);
    }
    let mut entries: Vec<BigRational> = half.iter().rev().cloned().collect();
    entries.extend(half.into_iter().skip(1));
    StencilCoefficients::from_rationals(2, 2 * n, entries)
}

/// Radius-N central first-derivative weights (order 2N).
pub fn derivative_coefficients(n: usize) -> Result<StencilCoefficients> {
    if n == 0 {
        return Err(Error::Config("radius must be at least 1".into()));
    }
    StencilCoefficients::from_rationals(1, 2 * n, lagrange_weights(n, 1))
}

/// Boundary tag recorded on an assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcTag {
    Periodic,
    Dirichlet,
    Neumann,
    Mixed,
}

impl fmt::Display for BcTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BcTag::Periodic => "periodic",
            BcTag::Dirichlet => "dirichlet",
            BcTag::Neumann => "neumann",
            BcTag::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// Ends of a one-dimensional chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ends {
    Periodic,
    Open(Wall, Wall),
}

impl Ends {
    pub const DIRICHLET: Ends = Ends::Open(Wall::Dirichlet, Wall::Dirichlet);
    pub const NEUMANN: Ends = Ends::Open(Wall::Neumann, Wall::Neumann);

    fn tag(&self) -> BcTag {
        match self {
            Ends::Periodic => BcTag::Periodic,
            Ends::Open(Wall::Dirichlet, Wall::Dirichlet) => BcTag::Dirichlet,
            Ends::Open(Wall::Neumann, Wall::Neumann) => BcTag::Neumann,
            Ends::Open(..) => BcTag::Mixed,
        }
    }
}

/// How a radius-N stencil is cut off at a Dirichlet wall.
///
/// `PrincipalSubmatrix` keeps the rows and columns of the infinite-lattice
/// operator that belong to the domain. `OddReflection` instead extends the
/// field oddly through the wall (at one spacing beyond the last vertex) so
/// that the sine modes of the box stay exact eigenvectors; for N = 1 the two
/// rules coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletRule {
    #[default]
    PrincipalSubmatrix,
    OddReflection,
}

#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    matrix: CsrMatrix<f64>,
    spacing: f64,
    order: usize,
    bc: BcTag,
}

impl DiscreteLaplacian {
    pub fn new(matrix: CsrMatrix<f64>, spacing: f64, order: usize, bc: BcTag) -> Self {
        DiscreteLaplacian { matrix, spacing, order, bc }
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn dense(&self) -> DMatrix<f64> {
        to_dense(&self.matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bc(&self) -> BcTag {
        self.bc
    }

    /// Max-abs asymmetry relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let scale = m.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
        (m - &m.transpose()).values().iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / scale
    }
}

fn check_stencil(coefs: &StencilCoefficients) -> Result<()> {
    if coefs.derivative() != 2 || !coefs.is_symmetric() {
        return Err(Error::Config("a Laplacian needs a symmetric second-derivative stencil".into()));
    }
    Ok(())
}

/// Entries of the 1-D operator on `n` vertices as triplets.
fn chain_triplets(
    coefs: &StencilCoefficients,
    n: usize,
    ends: Ends,
    rule: DirichletRule,
) -> Result<Vec<(usize, usize, f64)>> {
    let r = coefs.radius() as i64;
    let ni = n as i64;
    let c = |d: i64| -coefs.get(d);
    let mut out = Vec::new();
    match ends {
        Ends::Periodic => {
            if ni <= 2 * r {
                return Err(Error::Config(format!("periodic chain of {n} vertices is too short for radius {r}")));
            }
            for i in 0..ni {
                for j in -r..=r {
                    out.push((i as usize, (i + j).rem_euclid(ni) as usize, c(j)));
                }
            }
        }
        Ends::Open(lo, hi) => {
            if n == 0 {
                return Err(Error::Config("empty chain".into()));
            }
            if r > 1 && (lo == Wall::Neumann || hi == Wall::Neumann) {
                return Err(Error::Unsupported("Neumann walls are only symmetric for the radius-1 Laplacian".into()));
            }
            if r > 1 && rule == DirichletRule::OddReflection {
                // Vertex p (1-based) mirrors to -p and 2(n+1)-p; sum every image.
                let period = 2 * (ni + 1);
                for p in 1..=ni {
                    for q in 1..=ni {
                        let mut v = 0.0;
                        let kmax = (r + 2 * ni) / period + 1;
                        for k in -kmax..=kmax {
                            let shift = k * period;
                            let d_same = p - q - shift;
                            let d_mirror = p + q - shift;
                            if d_same.abs() <= r {
                                v += c(d_same);
                            }
                            if d_mirror.abs() <= r {
                                v -= c(d_mirror);
                            }
                        }
                        out.push(((p - 1) as usize, (q - 1) as usize, v));
                    }
                }
            } else {
                for i in 0..ni {
                    for j in -r..=r {
                        let k = i + j;
                        if (0..ni).contains(&k) {
                            out.push((i as usize, k as usize, c(j)));
                        }
                    }
                }
                // Radius 1 only: fold the missing neighbour of a Neumann end.
                if lo == Wall::Neumann {
                    out.push((0, 0, c(1)));
                }
                if hi == Wall::Neumann {
                    out.push((n - 1, n - 1, c(1)));
                }
            }
        }
    }
    Ok(out)
}

/// One-dimensional operator on `n` vertices with spacing `a`.
pub fn assemble_1d(coefs: &StencilCoefficients, n: usize, ends: Ends, a: f64) -> Result<DiscreteLaplacian> {
    assemble_1d_with(coefs, n, ends, a, DirichletRule::default())
}

pub fn assemble_1d_with(
    coefs: &StencilCoefficients,
    n: usize,
    ends: Ends,
    a: f64,
    rule: DirichletRule,
) -> Result<DiscreteLaplacian> {
    check_stencil(coefs)?;
    let trips = chain_triplets(coefs, n, ends, rule)?;
    Ok(DiscreteLaplacian::new(csr_from_triplets(n, n, trips), a, coefs.accuracy(), ends.tag()))
}

fn graph_tag(graph: &LatticeGraph) -> BcTag {
    let mut periodic = false;
    let mut dirichlet = false;
    let mut neumann = false;
    for axis in 0..graph.dimension() {
        for chain in graph.chains(axis) {
            match chain.ends {
                None => periodic = true,
                Some((lo, hi)) => {
                    for w in [lo, hi] {
                        match w {
                            Wall::Dirichlet => dirichlet = true,
                            Wall::Neumann => neumann = true,
                        }
                    }
                }
            }
        }
    }
    match (periodic, dirichlet, neumann) {
        (true, false, false) => BcTag::Periodic,
        (false, true, false) => BcTag::Dirichlet,
        (false, false, true) => BcTag::Neumann,
        _ => BcTag::Mixed,
    }
}

/// Sum of 1-D operators over every maximal axis chain of the graph.
pub fn assemble_multid(coefs: &StencilCoefficients, graph: &LatticeGraph) -> Result<DiscreteLaplacian> {
    assemble_multid_with(coefs, graph, DirichletRule::default())
}

pub fn assemble_multid_with(
    coefs: &StencilCoefficients,
    graph: &LatticeGraph,
    rule: DirichletRule,
) -> Result<DiscreteLaplacian> {
    check_stencil(coefs)?;
    let mut trips = Vec::new();
    for axis in 0..graph.dimension() {
        for chain in graph.chains(axis) {
            let ends = match chain.ends {
                None => Ends::Periodic,
                Some((lo, hi)) => Ends::Open(lo, hi),
            };
            let local = chain_triplets(coefs, chain.vertices.len(), ends, rule)?;
            trips.extend(local.into_iter().map(|(i, j, v)| (chain.vertices[i], chain.vertices[j], v)));
        }
    }
    let n = graph.num_vertices();
    Ok(DiscreteLaplacian::new(csr_from_triplets(n, n, trips), graph.spacing(), coefs.accuracy(), graph_tag(graph)))
}

/// Weighted graph Laplacian: degree plus self-loop weight on the diagonal.
pub fn graph_laplacian(graph: &LatticeGraph) -> DiscreteLaplacian {
    let mut trips = Vec::new();
    for e in graph.edges() {
        trips.push((e.src, e.src, e.weight));
        trips.push((e.dst, e.dst, e.weight));
        trips.push((e.src, e.dst, -e.weight));
        trips.push((e.dst, e.src, -e.weight));
    }
    for l in graph.self_loops() {
        trips.push((l.vertex, l.vertex, l.weight));
    }
    let n = graph.num_vertices();
    DiscreteLaplacian::new(csr_from_triplets(n, n, trips), graph.spacing(), 2, graph_tag(graph))
}

/// The smoothed 2-D stencil on an `n0 × n1` torus:
/// centre −6, axial 26/15, diagonal −1/10, distance-two axial −2/15.
pub fn stencil_laplacian_2d(n0: usize, n1: usize, a: f64) -> Result<DiscreteLaplacian> {
    if n0 < 5 || n1 < 5 {
        return Err(Error::Config("the 2-D stencil needs at least 5 vertices per axis".into()));
    }
    let weights: [((i64, i64), f64); 13] = [
        ((0, 0), 6.0),
        ((1, 0), -26.0 / 15.0),
        ((-1, 0), -26.0 / 15.0),
        ((0, 1), -26.0 / 15.0),
        ((0, -1), -26.0 / 15.0),
        ((1, 1), 0.1),
        ((1, -1), 0.1),
        ((-1, 1), 0.1),
        ((-1, -1), 0.1),
        ((2, 0), 2.0 / 15.0),
        ((-2, 0), 2.0 / 15.0),
        ((0, 2), 2.0 / 15.0),
        ((0, -2), 2.0 / 15.0),
    ];
    let (m0, m1) = (n0 as i64, n1 as i64);
    let mut trips = Vec::with_capacity(13 * n0 * n1);
    for i in 0..m0 {
        for j in 0..m1 {
            let row = (i * m1 + j) as usize;
            for ((di, dj), w) in weights {
                let col = ((i + di).rem_euclid(m0) * m1 + (j + dj).rem_euclid(m1)) as usize;
                trips.push((row, col, w));
            }
        }
    }
    Ok(DiscreteLaplacian::new(csr_from_triplets(n0 * n1, n0 * n1, trips), a, 2, BcTag::Periodic))
}

/// `L + (a m)² I`: a self loop of weight `(am)²` on every vertex.
pub fn klein_gordon_laplacian(l: &DiscreteLaplacian, m: f64) -> Result<DiscreteLaplacian> {
    if m < 0.0 || !m.is_finite() {
        return Err(Error::Domain(format!("mass must be non-negative, got {m}")));
    }
    let shift = (l.spacing() * m).powi(2);
    let n = l.dim();
    let trips = l.matrix().triplet_iter().map(|(i, j, v)| (i, j, *v)).chain((0..n).map(|i| (i, i, shift)));
    Ok(DiscreteLaplacian::new(csr_from_triplets(n, n, trips), l.spacing(), l.order(), l.bc()))
}

/// Radius-N Neumann construction that sets every virtual value equal to the
/// adjacent boundary value. The result is not symmetric for N ≥ 2, so it is
/// returned for inspection only and never wrapped as an operator.
pub fn neumann_fold_matrix(coefs: &StencilCoefficients, n: usize) -> Result<DMatrix<f64>> {
    check_stencil(coefs)?;
    let r = coefs.radius() as i64;
    let ni = n as i64;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..ni {
        for j in -r..=r {
            let k = (i + j).clamp(0, ni - 1);
            m[(i as usize, k as usize)] -= coefs.get(j);
        }
    }
    Ok(m)
}

/// Whether every coefficient of the family is an exact rational that sums to zero.
pub fn sums_to_zero_exactly(coefs: &StencilCoefficients) -> bool {
    let n = coefs.radius() as i64;
    let mut total = BigRational::zero();
    for j in -n..=n {
        match coefs.exact(j) {
            Some(v) => total += v,
            None => return false,
        }
    }
    !total.is_positive() && !total.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_derivative_weights() {
        let w = lagrange_weights(2, 3);
        let expect = [rat(-1, 2), rat(1, 1), rat(0, 1), rat(-1, 1), rat(1, 2)];
        assert_eq!(w, expect);
    }

    #[test]
    fn neumann_rejected_above_radius_one() {
        let c = laplacian_coefficients(2).unwrap();
        let err = assemble_1d(&c, 6, Ends::NEUMANN, 1.0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn odd_reflection_matches_principal_at_radius_one() {
        let c = laplacian_coefficients(1).unwrap();
        let p = assemble_1d(&c, 7, Ends::DIRICHLET, 1.0).unwrap().dense();
        let o = assemble_1d_with(&c, 7, Ends::DIRICHLET, 1.0, DirichletRule::OddReflection).unwrap().dense();
        assert_eq!(p, o);
    }

    #[test]
    fn periodic_too_short() {
        let c = laplacian_coefficients(2).unwrap();
        assert!(assemble_1d(&c, 4, Ends::Periodic, 1.0).is_err());
    }
}
