//! Turning a config into lattices, operators and initial states.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use wavekit::hamiltonian::{assemble_block, BlockHamiltonian};
use wavekit::incidence::{graph_incidence, lattice_incidence, solve_circulant_ansatz, AnsatzForm, IncidenceMatrix};
use wavekit::initstate::{
    general_state, static_state, translating_packet, FieldState, GaussianPacket, InitialCondition,
};
use wavekit::laplacian::{assemble_multid_with, graph_laplacian, laplacian_coefficients, DiscreteLaplacian};
use wavekit::lattice::{apply_scatterer, build_grid, Face, GridSpec, LatticeGraph, ScattererMask};

use crate::config::{AxisFaces, FacesConfig, InitialKind, RunConfig};
use crate::CliError;

fn pad(face: Face) -> f64 {
    match face {
        Face::Dirichlet => 1.0,
        Face::Neumann => 0.5,
        Face::Periodic => 0.0,
    }
}

pub fn grid_spec(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    let g = &cfg.grid;
    let dim = g.extent.len();
    if dim == 0 {
        return Err(CliError::Config("grid.extent must list at least one axis".into()));
    }
    let faces: Vec<[Face; 2]> = match &g.faces {
        FacesConfig::All(f) => vec![[*f, *f]; dim],
        FacesConfig::PerAxis(list) if list.len() == dim => list
            .iter()
            .map(|f| match *f {
                AxisFaces::Both(f) => [f, f],
                AxisFaces::Pair(p) => p,
            })
            .collect(),
        FacesConfig::PerAxis(list) => {
            return Err(CliError::Config(format!("grid.faces has {} entries for {dim} axes", list.len())))
        }
    };
    let spacing = match g.spacing {
        Some(a) => a,
        None => {
            // Unit box along the first axis.
            let [lo, hi] = faces[0];
            let span = g.extent[0] as f64 - 1.0
                + match (lo, hi) {
                    (Face::Periodic, _) => 1.0,
                    _ => pad(lo) + pad(hi),
                };
            1.0 / span
        }
    };
    let origin = g.origin.clone().unwrap_or_else(|| faces.iter().map(|f| pad(f[0]) * spacing).collect());
    Ok(GridSpec::new(g.extent.clone(), spacing, faces)?.with_origin(origin)?)
}

fn read_mask(path: &Path) -> Result<Vec<Vec<usize>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

/// The configured lattice with its Laplacian, verified factor and generator.
pub struct Operator {
    pub spec: GridSpec,
    pub graph: LatticeGraph,
    pub l: DiscreteLaplacian,
    pub b: IncidenceMatrix,
    pub h: BlockHamiltonian,
    /// No scatterer, so the box is convex.
    pub convex: bool,
}

impl Operator {
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let spec = grid_spec(cfg)?;
        let mut graph = build_grid(&spec)?;
        if let Some(s) = &cfg.scatterer {
            let mask = ScattererMask::new(read_mask(&s.mask)?, s.condition);
            graph = apply_scatterer(&graph, &mask)?;
        }
        let radius = cfg.laplacian.radius;
        let (l, b) = if radius == 1 {
            (graph_laplacian(&graph), graph_incidence(&graph))
        } else {
            let coefs = laplacian_coefficients(radius)?;
            let sol = solve_circulant_ansatz(&coefs, AnsatzForm::ShiftDifference)?;
            let b = lattice_incidence(&sol, &graph, cfg.laplacian.rule)?;
            (assemble_multid_with(&coefs, &graph, cfg.laplacian.rule)?, b)
        };
        let h = assemble_block(&b)?;
        Ok(Operator { spec, graph, l, b, h, convex: cfg.scatterer.is_none() })
    }

    /// SHA-256 over the shape, sparsity pattern and exact values of `H`.
    pub fn hash(&self) -> String {
        let m = self.h.matrix();
        let mut hasher = Sha256::new();
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        for row in m.row_iter() {
            hasher.update((row.nnz() as u64).to_le_bytes());
            for (&j, v) in row.col_indices().iter().zip(row.values()) {
                hasher.update((j as u64).to_le_bytes());
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Initial data as real samples, plus the encoded state.
pub struct Initial {
    pub phi0: Vec<f64>,
    pub phidot0: Vec<f64>,
    pub state: FieldState,
    /// Kernel leakage of the pseudoinverse preparation, when it was used.
    pub leakage: Option<f64>,
}

#[derive(Deserialize)]
struct SampleRow {
    vertex_index: usize,
    value: f64,
    #[serde(default)]
    velocity: f64,
}

fn read_samples(path: &Path, nv: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(&e))?;
    let (mut phi, mut dphi) = (vec![0.0; nv], vec![0.0; nv]);
    for row in rdr.deserialize::<SampleRow>() {
        let row = row.map_err(|e| bad(&e))?;
        if row.vertex_index >= nv {
            return Err(bad(&format!("vertex_index {} out of range (0..{nv})", row.vertex_index)));
        }
        phi[row.vertex_index] = row.value;
        dphi[row.vertex_index] = row.velocity;
    }
    Ok((phi, dphi))
}

impl Initial {
    pub fn build(cfg: &RunConfig, op: &Operator) -> Result<Self, CliError> {
        let ic = &cfg.initial;
        let g = &op.graph;
        let nv = g.num_vertices();
        let ne = op.b.n_edges();
        let sides = op.spec.side_lengths();
        let walls: Vec<f64> = (0..op.spec.dimension())
            .map(|d| {
                let o = op.spec.origin.get(d).copied().unwrap_or(0.0);
                o - pad(op.spec.faces[d][0]) * op.spec.spacing
            })
            .collect();
        let real = |v: &[f64]| v.iter().map(|&x| Complex64::from(x)).collect::<Vec<_>>();
        match ic.kind {
            InitialKind::Standing => {
                if ic.mode == 0 {
                    return Err(CliError::Config("initial.mode must be at least 1".into()));
                }
                let m = ic.mode as f64;
                let phi0: Vec<f64> = (0..nv)
                    .map(|v| {
                        g.position(v)
                            .iter()
                            .enumerate()
                            .map(|(d, x)| {
                                let s = (x - walls[d]) / sides[d];
                                match op.spec.faces[d][0] {
                                    Face::Dirichlet => (m * PI * s).sin(),
                                    Face::Neumann => (m * PI * s).cos(),
                                    Face::Periodic => (2.0 * m * PI * s).cos(),
                                }
                            })
                            .product()
                    })
                    .collect();
                let state = static_state(&real(&phi0), ne)?;
                Ok(Initial { phi0, phidot0: vec![0.0; nv], state, leakage: None })
            }
            InitialKind::Gaussian => {
                let centre =
                    ic.centre.clone().unwrap_or_else(|| walls.iter().zip(&sides).map(|(w, s)| w + s / 2.0).collect());
                if centre.len() != op.spec.dimension() {
                    return Err(CliError::Config("initial.centre needs one entry per axis".into()));
                }
                let packet = GaussianPacket { centre, width: ic.width, velocity: ic.velocity.clone() };
                if !(ic.width > 0.0) {
                    return Err(CliError::Config("initial.width must be positive".into()));
                }
                let phi0: Vec<f64> = (0..nv).map(|v| packet.profile(&g.position(v))).collect();
                if ic.velocity.is_empty() {
                    let state = static_state(&real(&phi0), ne)?;
                    return Ok(Initial { phi0, phidot0: vec![0.0; nv], state, leakage: None });
                }
                let w2 = ic.width * ic.width;
                let phidot0: Vec<f64> = (0..nv)
                    .map(|v| {
                        let x = g.position(v);
                        let drift: f64 =
                            x.iter().zip(&packet.centre).zip(&ic.velocity).map(|((x, c), u)| u * (x - c)).sum();
                        2.0 * drift / w2 * phi0[v]
                    })
                    .collect();
                let profile = |x: &[f64]| packet.profile(x);
                let state = translating_packet(&profile, g, &op.b, &ic.velocity, ic.sampling)?;
                Ok(Initial { phi0, phidot0, state, leakage: None })
            }
            InitialKind::Samples => {
                let path = ic
                    .file
                    .as_ref()
                    .ok_or_else(|| CliError::Config("initial.kind = \"samples\" needs initial.file".into()))?;
                let (phi0, phidot0) = read_samples(path, nv)?;
                if phidot0.iter().all(|&x| x == 0.0) {
                    let state = static_state(&real(&phi0), ne)?;
                    return Ok(Initial { phi0, phidot0, state, leakage: None });
                }
                let (state, diag) = general_state(&InitialCondition::real(&phi0, &phidot0), &op.b)?;
                Ok(Initial { phi0, phidot0, state, leakage: Some(diag.leakage) })
            }
        }
    }
}
