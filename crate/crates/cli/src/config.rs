//! Run configuration, read from a TOML file. Every section is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wavekit::analysis::QCase;
use wavekit::initstate::EdgeSampling;
use wavekit::laplacian::DirichletRule;
use wavekit::lattice::{Face, Wall};

use crate::CliError;

/// Shown by `wavekit --help`, one line per key.
pub const CONFIG_KEYS: &str = "\
CONFIG KEYS (TOML; every key is optional):
  seed                      PRNG seed for multi-start solves and random fields (default 0)
  output                    output directory when --out is not given
  studies                   list run by `wavekit run`: coeffs, factor, build, simulate, qfactor,
                            bounds, estimate-gates, maxwell, kleingordon, condnum
  [grid]
  extent                    vertices per axis, e.g. [63] or [32, 32] (default [63])
  spacing                   lattice spacing a (default: unit box along axis 0)
  faces                     \"dirichlet\" | \"neumann\" | \"periodic\" for all faces, a list with one
                            tag per axis, or [lower, upper] pairs per axis (default \"dirichlet\")
  origin                    position of vertex 0 (default: the lower wall sits at 0)
  [scatterer]
  mask                      CSV of removed vertices, one row of integer coordinates per vertex
  condition                 \"dirichlet\" | \"neumann\" on the rim of the hole (default dirichlet)
  [laplacian]
  radius                    stencil radius N; the scheme has order 2N (default 1)
  rule                      \"principal-submatrix\" | \"odd-reflection\" at Dirichlet walls
  [initial]
  kind                      \"standing\" | \"gaussian\" | \"samples\" (default standing)
  mode                      standing-wave mode number along every axis (default 1)
  centre, width             gaussian exp(-|x-centre|^2/width^2) (default: box centre, 0.1)
  velocity                  unit vector; the gaussian then translates rigidly (default at rest)
  sampling                  \"midpoint\" | \"anchor\" edge sampling for moving packets
  file                      CSV with columns vertex_index,value[,velocity] for kind = samples
  [evolution]
  t_max                     horizon T (default 0.5)
  dt                        spacing of the sample grid (default 0.01)
  method                    \"rk\" | \"exact\" (default rk)
  rtol, atol                integrator tolerances (default 1e-9)
  dt_max                    largest step; must stay below the spacing (default a/2)
  [factor]
  form                      \"shift\" | \"signed\" | \"stencil2d\"
  all                       report every root found by the multi-start solver
  starts                    number of Newton starts (default 64)
  [qfactor]
  cases                     subset of [\"spreading\", \"translating\", \"standing\"]
  orders                    subset of [2, 4]
  n, length, centre, width  coarse vertex count, box length, gaussian parameters
  dt, t_max                 sample spacing and averaging window end (default 1e-4, 0.5)
  method, rtol, atol        integrator (default rk at 1e-12)
  rule, sampling            Dirichlet rule and packet edge sampling
  tolerance                 allowed relative deviation of <Q> from 2^k (translating: 2) (default 0.1)
  series                    include Q(t) in the report
  [bounds]
  eps                       perturbation strength (default a/sqrt(20))
  t                         time at which the bound is checked (default evolution.t_max)
  axis_order                k of the d^k/dx^k term on 1-D periodic grids (default 3)
  div_tolerance             allowed excess of |a B^+| over l/pi on convex grids (default 0.1)
  [gates]
  eps                       target simulation error (default 1e-3)
  t                         simulated time (default evolution.t_max)
  sparsity, hmax, qubits    override the values measured on the configured operator
  [maxwell]
  n, spacing, radius        periodic cube side, spacing and derivative radius (default 8, 0.25, 2)
  t_max, rtol, atol         evolution of a seeded random field (default 1.0, 1e-10)
  mode                      plane-wave mode index along x (default 1)
  [kleingordon]
  n, spacing, mass          periodic line and mass (default 24, 0.2, 1.1)
  [condnum]
  sizes                     path-lattice vertex counts (default [16, 32, 64, 128])";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub studies: Vec<String>,
    pub grid: GridConfig,
    pub scatterer: Option<ScattererConfig>,
    pub laplacian: LaplacianConfig,
    pub initial: InitialConfig,
    pub evolution: EvolutionConfig,
    pub factor: FactorConfig,
    pub qfactor: QFactorConfig,
    pub bounds: BoundsConfig,
    pub gates: GatesConfig,
    pub maxwell: MaxwellConfig,
    pub kleingordon: KleinGordonConfig,
    pub condnum: CondnumConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisFaces {
    Both(Face),
    Pair([Face; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FacesConfig {
    All(Face),
    PerAxis(Vec<AxisFaces>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub extent: Vec<usize>,
    pub spacing: Option<f64>,
    pub faces: FacesConfig,
    pub origin: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { extent: vec![63], spacing: None, faces: FacesConfig::All(Face::Dirichlet), origin: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererConfig {
    pub mask: PathBuf,
    #[serde(default = "dirichlet_wall")]
    pub condition: Wall,
}

fn dirichlet_wall() -> Wall {
    Wall::Dirichlet
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplacianConfig {
    pub radius: usize,
    pub rule: DirichletRule,
}

impl Default for LaplacianConfig {
    fn default() -> Self {
        LaplacianConfig { radius: 1, rule: DirichletRule::PrincipalSubmatrix }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    #[default]
    Standing,
    Gaussian,
    Samples,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub mode: usize,
    pub centre: Option<Vec<f64>>,
    pub width: f64,
    pub velocity: Vec<f64>,
    pub sampling: EdgeSampling,
    pub file: Option<PathBuf>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: InitialKind::Standing,
            mode: 1,
            centre: None,
            width: 0.1,
            velocity: Vec::new(),
            sampling: EdgeSampling::Midpoint,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk,
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub t_max: f64,
    pub dt: f64,
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub dt_max: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig { t_max: 0.5, dt: 0.01, method: Method::Rk, rtol: 1e-9, atol: 1e-9, dt_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormArg {
    #[default]
    Shift,
    Signed,
    Stencil2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub form: FormArg,
    pub all: bool,
    pub starts: usize,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig { form: FormArg::Shift, all: false, starts: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QFactorConfig {
    pub cases: Vec<QCase>,
    pub orders: Vec<usize>,
    pub n: Option<usize>,
    pub length: Option<f64>,
    pub centre: Option<f64>,
    pub width: Option<f64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub method: Option<Method>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub rule: Option<DirichletRule>,
    pub sampling: Option<EdgeSampling>,
    pub tolerance: f64,
    pub series: bool,
}

impl Default for QFactorConfig {
    fn default() -> Self {
        QFactorConfig {
            cases: vec![QCase::Spreading, QCase::Translating, QCase::Standing],
            orders: vec![2, 4],
            n: None,
            length: None,
            centre: None,
            width: None,
            dt: None,
            t_max: None,
            method: None,
            rtol: None,
            atol: None,
            rule: None,
            sampling: None,
            tolerance: 0.1,
            series: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub axis_order: usize,
    pub div_tolerance: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { eps: None, t: None, axis_order: 3, div_tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatesConfig {
    pub eps: f64,
    pub t: Option<f64>,
    pub sparsity: Option<f64>,
    pub hmax: Option<f64>,
    pub qubits: Option<f64>,
}

impl Default for GatesConfig {
    fn default() -> Self {
        GatesConfig { eps: 1e-3, t: None, sparsity: None, hmax: None, qubits: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxwellConfig {
    pub n: usize,
    pub spacing: f64,
    pub radius: usize,
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub mode: usize,
}

impl Default for MaxwellConfig {
    fn default() -> Self {
        MaxwellConfig { n: 8, spacing: 0.25, radius: 2, t_max: 1.0, rtol: 1e-10, atol: 1e-10, mode: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KleinGordonConfig {
    pub n: usize,
    pub spacing: f64,
    pub mass: f64,
}

impl Default for KleinGordonConfig {
    fn default() -> Self {
        KleinGordonConfig { n: 24, spacing: 0.2, mass: 1.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondnumConfig {
    pub sizes: Vec<usize>,
}

impl Default for CondnumConfig {
    fn default() -> Self {
        CondnumConfig { sizes: vec![16, 32, 64, 128] }
    }
}

impl RunConfig {
    /// Parse a config file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(s) = cfg.scatterer.as_mut() {
            rebase(&mut s.mask);
        }
        if let Some(f) = cfg.initial.file.as_mut() {
            rebase(f);
        }
        if let Some(o) = cfg.output.as_mut() {
            rebase(o);
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    fn check_files(&self) -> Result<(), CliError> {
        let mut files: Vec<&Path> = Vec::new();
        if let Some(s) = &self.scatterer {
            files.push(&s.mask);
        }
        if let Some(f) = &self.initial.file {
            files.push(f);
        }
        match files.into_iter().find(|f| !f.is_file()) {
            Some(f) => Err(CliError::Config(format!("referenced file {} does not exist", f.display()))),
            None => Ok(()),
        }
    }
}
