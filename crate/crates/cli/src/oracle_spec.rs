//! `--oracle` values: `wa:<file>`, `ngram:<file>`, `exec:<cmd>`, `tcp:<host:port>`.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use sha2::{Digest, Sha256};

use wadistill::ngram::{NGramModel, NGramOracle};
use wadistill::oracle::{CachedOracle, ExternalOracle, NoisyOracle, QueryCache, Transport, WaOracle};
use wadistill::{Oracle, WeightedAutomaton};

use crate::error::{io_at, CliError};

/// Entries kept in memory when a spill cache is attached.
pub const CACHE_ENTRIES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleSpec {
    Wa(PathBuf),
    NGram(PathBuf),
    Exec(String),
    Tcp(String),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| format!("oracle spec {s:?} lacks a kind prefix"))?;
        if rest.is_empty() {
            return Err(format!("oracle spec {s:?} is missing its argument"));
        }
        match kind {
            "wa" => Ok(OracleSpec::Wa(rest.into())),
            "ngram" => Ok(OracleSpec::NGram(rest.into())),
            "exec" => Ok(OracleSpec::Exec(rest.into())),
            "tcp" => Ok(OracleSpec::Tcp(rest.into())),
            other => Err(format!("unknown oracle kind {other:?} (expected wa, ngram, exec or tcp)")),
        }
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Wa(p) => write!(f, "wa:{}", p.display()),
            OracleSpec::NGram(p) => write!(f, "ngram:{}", p.display()),
            OracleSpec::Exec(c) => write!(f, "exec:{c}"),
            OracleSpec::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub timeout: Duration,
    /// Multiplicative answer noise level and seed.
    pub noise: Option<(f64, u64)>,
    pub cache_file: Option<PathBuf>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { timeout: wadistill::oracle::DEFAULT_TIMEOUT, noise: None, cache_file: None }
    }
}

pub struct OpenedOracle {
    pub oracle: Box<dyn Oracle>,
    /// Hex SHA-256 over the oracle's defining content (file bytes for
    /// in-process oracles, the spec text for external ones) and options.
    pub hash: String,
    pub identity: String,
}

pub fn open_oracle(spec: &OracleSpec, opts: &OracleOptions) -> Result<OpenedOracle, CliError> {
    let mut hasher = Sha256::new();
    hasher.update(spec.to_string().split(':').next().unwrap_or_default().as_bytes());
    let base: Box<dyn Oracle> = match spec {
        OracleSpec::Wa(path) => {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            hasher.update(text.as_bytes());
            let wa = WeightedAutomaton::from_document(&text)?;
            Box::new(WaOracle::new(wa).with_identity(spec.to_string()))
        }
        OracleSpec::NGram(path) => {
            let bytes = fs::read(path).map_err(io_at(path))?;
            hasher.update(&bytes);
            let model = NGramModel::read(bytes.as_slice())?;
            Box::new(NGramOracle::new(model).with_identity(spec.to_string()))
        }
        OracleSpec::Exec(cmd) => {
            hasher.update(cmd.as_bytes());
            Box::new(ExternalOracle::connect_discover(Transport::Subprocess(cmd.clone()), opts.timeout)?)
        }
        OracleSpec::Tcp(addr) => {
            hasher.update(addr.as_bytes());
            Box::new(ExternalOracle::connect_discover(Transport::Tcp(addr.clone()), opts.timeout)?)
        }
    };
    let oracle: Box<dyn Oracle> = match opts.noise {
        Some((level, seed)) => {
            if !(0.0..1.0).contains(&level) {
                return Err(CliError::Usage(format!("noise level {level} must lie in [0, 1)")));
            }
            hasher.update(format!("noise:{level}:{seed}").as_bytes());
            Box::new(NoisyOracle::new(base, level, seed))
        }
        None => base,
    };
    let oracle: Box<dyn Oracle> = match &opts.cache_file {
        Some(path) => Box::new(CachedOracle::new(oracle, QueryCache::with_spill(CACHE_ENTRIES, path).map_err(io_at(path))?)),
        None => oracle,
    };
    let identity = oracle.identity();
    Ok(OpenedOracle { oracle, hash: hex::encode(hasher.finalize()), identity })
}
