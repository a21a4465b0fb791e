//! Artifact files: a payload, the run configuration that produced it, and a
//! SHA-256 content hash over both. Writes go through a temp file and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::exit::{CliError, CliResult};

/// Where the matrix of a run came from.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    Named(String),
    CycleFree { ell: usize, trim: bool, ordering: String },
    File(String),
    #[default]
    None,
}

/// Every parameter of a run, embedded verbatim in each artifact.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub matrix: MatrixSource,
    /// Exact decimal string as given on the command line.
    pub lambda: Option<String>,
    pub scale: u32,
    pub d: Option<usize>,
    pub rounds: Option<usize>,
    pub budget_seconds: Option<u64>,
    pub outputs: Vec<String>,
    pub jobs: usize,
    pub version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub config: RunConfig,
    pub payload: Value,
    pub sha256: String,
}

fn digest(config: &Value, payload: &Value) -> String {
    // serde_json maps are ordered, so the encoding is canonical
    let bytes = serde_json::to_vec(&json!({ "config": config, "payload": payload })).expect("json values serialize");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifact {
    pub fn new(config: &RunConfig, payload: &impl Serialize) -> CliResult<Self> {
        let payload = serde_json::to_value(payload).map_err(CliError::internal)?;
        let cfg = serde_json::to_value(config).map_err(CliError::internal)?;
        let sha256 = digest(&cfg, &payload);
        Ok(Artifact { config: config.clone(), payload, sha256 })
    }

    /// Whether the stored hash matches the config and payload.
    pub fn hash_ok(&self) -> bool {
        let cfg = serde_json::to_value(&self.config).expect("config serializes");
        digest(&cfg, &self.payload) == self.sha256
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(CliError::internal)?;
        write_atomic(path, text.as_bytes())
    }
}

/// Writes to a sibling temp file, then renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::usage(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
