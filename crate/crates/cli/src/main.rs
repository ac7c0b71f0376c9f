//! `wavekit`: config-driven front end for the lattice wave studies.

mod artifacts;
mod config;
mod setup;
mod studies;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use wavekit::analysis::QCase;

use artifacts::{manifest, print, write_all, Outcome};
use config::{FormArg, RunConfig, CONFIG_KEYS};
use studies::GateArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Core(#[from] wavekit::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if e.is_configuration() || matches!(e, wavekit::Error::Normalization) => 2,
            CliError::Core(wavekit::Error::Unverified { .. }) => 1,
            CliError::Core(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "assertion",
            2 => "configuration",
            _ => "numerical",
        }
    }
}

#[derive(Parser)]
#[command(
    name = "wavekit",
    version,
    about = "Lattice wave equations simulated through incidence-matrix factorizations",
    long_about = "Lattice wave equations simulated through incidence-matrix factorizations.\n\n\
        With --out DIR every artifact of the command is written to DIR together with a manifest.json \
        (operator hash, version, seed, tolerances, checks). Without it the main artifact is printed.\n\n\
        Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error, 3 numerical failure.",
    after_help = CONFIG_KEYS,
    after_long_help = CONFIG_KEYS
)]
struct Cli {
    /// TOML run configuration (see the key list below).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for artifacts and manifest.json.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Spreading,
    Translating,
    Standing,
}

impl From<CaseArg> for QCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Spreading => QCase::Spreading,
            CaseArg::Translating => QCase::Translating,
            CaseArg::Standing => QCase::Standing,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print second-derivative (or first-derivative) stencil weights as CSV.
    Coeffs {
        #[arg(long)]
        radius: usize,
        /// First-derivative family instead of the Laplacian.
        #[arg(long)]
        derivative: bool,
    },
    /// Solve for incidence-matrix coefficients; JSON with coefficients and residual.
    Factor {
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
        /// Report every root found by the multi-start solver.
        #[arg(long)]
        all: bool,
    },
    /// Build the configured lattice; edge list CSV (src, dst, weight, is_self_loop).
    Build,
    /// Evolve the configured initial state; trajectory CSV (t, vertex_index, re, im).
    Simulate,
    /// Q-factor convergence table as JSON.
    Qfactor {
        #[arg(long, value_enum)]
        case: Option<CaseArg>,
        #[arg(long, value_parser = ["2", "4"])]
        order: Option<String>,
    },
    /// Smoothness and inverse-divergence bounds against measured values, as CSV.
    Bounds,
    /// Gate-count estimate for the configured operator; JSON {s, hmax, qubits, tau, g}.
    EstimateGates {
        #[arg(long)]
        eps: Option<f64>,
        /// Simulated time.
        #[arg(long)]
        time: Option<f64>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        hmax: Option<f64>,
        #[arg(long)]
        qubits: Option<f64>,
    },
    /// Maxwell plane-wave frequency and energy conservation on a periodic cube.
    Maxwell,
    /// Klein-Gordon lattice dispersion on a periodic line.
    Kleingordon,
    /// Conditioning of the first-order companion operator over path lattices.
    Condnum {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Run every study listed under `studies` in the config.
    Run,
}

const STUDIES: [&str; 10] = [
    "coeffs",
    "factor",
    "build",
    "simulate",
    "qfactor",
    "bounds",
    "estimate-gates",
    "maxwell",
    "kleingordon",
    "condnum",
];

/// The study as configured, with no command-line overrides.
fn configured(cfg: &RunConfig, name: &str) -> Result<Outcome, CliError> {
    match name {
        "coeffs" => studies::coeffs(cfg.laplacian.radius, false),
        "factor" => studies::factor(cfg, cfg.laplacian.radius, cfg.factor.form, cfg.factor.all),
        "build" => studies::build(cfg),
        "simulate" => studies::simulate(cfg),
        "qfactor" => studies::qfactor(cfg, &cfg.qfactor.cases, &cfg.qfactor.orders),
        "bounds" => studies::bounds(cfg),
        "estimate-gates" => studies::estimate_gates(cfg, &GateArgs::default()),
        "maxwell" => studies::maxwell(cfg),
        "kleingordon" => studies::kleingordon(cfg),
        "condnum" => studies::condnum(cfg, &cfg.condnum.sizes),
        other => Err(CliError::Config(format!("unknown study {other:?}; expected one of {}", STUDIES.join(", ")))),
    }
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out_dir = cli.out.clone().or_else(|| cfg.output.clone());
    let (name, results): (&str, Vec<(String, Outcome)>) = match cli.command {
        Command::Run => {
            if let Some(bad) = cfg.studies.iter().find(|s| !STUDIES.contains(&s.as_str())) {
                return Err(CliError::Config(format!("unknown study {bad:?}; expected one of {}", STUDIES.join(", "))));
            }
            let mut done = Vec::new();
            for s in &cfg.studies {
                let mut o = configured(&cfg, s)?;
                for a in &mut o.artifacts {
                    a.name = format!("{s}-{}", a.name);
                }
                done.push((s.clone(), o));
            }
            ("run", done)
        }
        cmd => {
            let (name, o) = match cmd {
                Command::Coeffs { radius, derivative } => ("coeffs", studies::coeffs(radius, derivative)?),
                Command::Factor { radius, form, all } => (
                    "factor",
                    studies::factor(
                        &cfg,
                        radius.unwrap_or(cfg.laplacian.radius),
                        form.unwrap_or(cfg.factor.form),
                        all || cfg.factor.all,
                    )?,
                ),
                Command::Qfactor { case, order } => {
                    let cases = case.map(|c| vec![c.into()]).unwrap_or_else(|| cfg.qfactor.cases.clone());
                    let orders = match order {
                        Some(o) => vec![o.parse().map_err(|_| CliError::Config(format!("bad order {o}")))?],
                        None => cfg.qfactor.orders.clone(),
                    };
                    ("qfactor", studies::qfactor(&cfg, &cases, &orders)?)
                }
                Command::EstimateGates { eps, time, sparsity, hmax, qubits } => (
                    "estimate-gates",
                    studies::estimate_gates(&cfg, &GateArgs { eps, t: time, sparsity, hmax, qubits })?,
                ),
                Command::Condnum { sizes } => {
                    ("condnum", studies::condnum(&cfg, sizes.as_deref().unwrap_or(&cfg.condnum.sizes))?)
                }
                Command::Build => ("build", configured(&cfg, "build")?),
                Command::Simulate => ("simulate", configured(&cfg, "simulate")?),
                Command::Bounds => ("bounds", configured(&cfg, "bounds")?),
                Command::Maxwell => ("maxwell", configured(&cfg, "maxwell")?),
                Command::Kleingordon => ("kleingordon", configured(&cfg, "kleingordon")?),
                Command::Run => unreachable!(),
            };
            (name, vec![(name.to_string(), o)])
        }
    };

    match &out_dir {
        Some(dir) => {
            let listed: Vec<(String, &Outcome)> = results.iter().map(|(n, o)| (n.clone(), o)).collect();
            let m = manifest(name, cfg.seed, &cfg, &listed);
            let all: Vec<_> = results.iter().flat_map(|(_, o)| &o.artifacts).collect();
            write_all(dir, &all, &m)?;
        }
        None => {
            for (_, o) in &results {
                if let Some(a) = o.artifacts.first() {
                    print(a)?;
                }
            }
        }
    }
    let mut failed = false;
    for (study, o) in &results {
        for c in o.failures() {
            failed = true;
            eprintln!("{}", json!({ "status": "fail", "study": study, "check": c.name, "detail": c.detail }));
        }
    }
    Ok(if failed { 1 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                json!({ "status": "error", "kind": e.kind(), "exit_code": code, "message": e.to_string() })
            );
            ExitCode::from(code)
        }
    }
}
