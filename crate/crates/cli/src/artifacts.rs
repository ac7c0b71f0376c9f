//! Study outputs, the run manifest, and writing them out.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json(name: &str, value: &impl Serialize) -> Result<Self, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        bytes.push(b'\n');
        Ok(Artifact { name: name.into(), bytes })
    }

    pub fn csv<R: Serialize>(name: &str, rows: impl IntoIterator<Item = R>) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Numerical(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Artifact { name: name.into(), bytes })
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

/// One asserted property of a study.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, detail }
    }
}

/// Everything a study produced. The first artifact is the one printed to
/// stdout when no output directory is given.
#[derive(Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    /// Operator hash and metadata, tolerances, sample grids.
    pub info: serde_json::Map<String, Value>,
}

impl Outcome {
    pub fn with(artifact: Artifact) -> Self {
        Outcome { artifacts: vec![artifact], ..Outcome::default() }
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.info.insert(key.into(), value);
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Manifest for one or more named studies. Contains no timestamps, so reruns
/// of the same config are byte-identical.
pub fn manifest(command: &str, seed: u64, config: &impl Serialize, studies: &[(String, &Outcome)]) -> Value {
    let entries: Vec<Value> = studies
        .iter()
        .map(|(name, o)| {
            let artifacts: Vec<Value> = o
                .artifacts
                .iter()
                .map(|a| json!({ "name": a.name, "sha256": a.digest(), "bytes": a.bytes.len() }))
                .collect();
            json!({
                "study": name,
                "passed": o.checks.iter().all(|c| c.passed),
                "checks": o.checks,
                "info": o.info,
                "artifacts": artifacts,
            })
        })
        .collect();
    json!({
        "tool": "wavekit",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "studies": entries,
    })
}

pub fn write_all(dir: &Path, artifacts: &[&Artifact], manifest: &Value) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes).map_err(io)?;
    }
    let m = Artifact::json("manifest.json", manifest)?;
    std::fs::write(dir.join(&m.name), &m.bytes).map_err(io)
}

pub fn print(artifact: &Artifact) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(&artifact.bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}")))
}
