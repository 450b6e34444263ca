//! Run manifest: config hash, input digests and a digest of every emitted
//! file. Wall-clock timings live in a separate file so that reruns produce
//! byte-identical bundles.

use std::collections::BTreeMap;
use std::path::Path;

use agrotrend_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    /// The hashed settings, without output location and worker count.
    pub config: RunConfig,
    pub stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())).into())
}

/// Files whose digest no longer matches the manifest, with the reason.
pub fn verify(dir: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let m = read_manifest(dir)?;
    let mut bad = Vec::new();
    for (name, want) in &m.outputs {
        match sha256_file(&dir.join(name)) {
            Ok(got) if &got == want => {}
            Ok(_) => bad.push((name.clone(), "digest differs".to_string())),
            Err(e) => bad.push((name.clone(), e.to_string())),
        }
    }
    Ok(bad)
}
