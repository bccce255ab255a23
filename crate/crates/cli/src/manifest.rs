//! Run manifests: everything needed to regenerate a command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_at, CliError};
use crate::pipeline::BasisParams;

/// Steps run by `distill`, in order. `spectrum` stops after the second.
pub const PIPELINE: [&str; 3] = ["generate_basis", "fill_hankel", "spectral_extraction"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub spec: String,
    pub identity: String,
    pub sha256: String,
    pub noise: Option<(f64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisSource {
    Generated(BasisParams),
    File { path: PathBuf, sha256: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub pipeline: Vec<String>,
    pub oracle: OracleRecord,
    pub basis: BasisSource,
    /// Sizes after prefix closure.
    pub p: usize,
    pub s: usize,
    pub unique_queries: usize,
    pub threshold_decades: f64,
    pub hankel_rank: usize,
    /// Requested rank; `None` means the detected Hankel rank was used.
    pub rank: Option<usize>,
    pub extracted_rank: Option<usize>,
    pub outputs: BTreeMap<String, OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_at(path))?))
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(io_at(path))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}
