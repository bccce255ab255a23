//! Prefix/suffix bases and Hankel sub-blocks filled from oracle answers.

mod basis_file;
mod fill;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::Symbol;
use crate::oracle::{Oracle, OracleError, Seq};

pub use basis_file::{read_basis, write_basis};
pub use fill::{fill_hankel, fill_hankel_with, FillOptions, HankelBlocks, ValueSpace, CHECKPOINT_EVERY, MAX_BLOCK_DIM};

/// Default cap on sampled sequence length.
pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum HankelError {
    #[error("basis exhausted after {draws} draws: reached |P|={prefixes}, |S|={suffixes}")]
    BasisExhausted { prefixes: usize, suffixes: usize, draws: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fill aborted after {answered}/{total} queries: {reason}{}", checkpoint_hint(.checkpoint))]
    FillAborted { answered: usize, total: usize, reason: String, checkpoint: Option<std::path::PathBuf> },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn checkpoint_hint(path: &Option<std::path::PathBuf>) -> String {
    match path {
        Some(p) => format!(" (checkpoint at {})", p.display()),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Oracle,
    /// Basis given directly rather than sampled.
    Explicit,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Uniform => "uniform",
            Strategy::Oracle => "oracle",
            Strategy::Explicit => "explicit",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "oracle" => Ok(Strategy::Oracle),
            "explicit" => Ok(Strategy::Explicit),
            other => Err(format!("unknown basis strategy {other:?} (expected uniform or oracle)")),
        }
    }
}

/// Length-then-lexicographic order.
pub fn canonical_cmp(a: &[Symbol], b: &[Symbol]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// A prefix-closed prefix set and a suffix set, both containing λ, both in
/// canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    alphabet_size: usize,
    prefixes: Vec<Seq>,
    suffixes: Vec<Seq>,
    pub strategy: Strategy,
    pub max_len: usize,
    pub seed: u64,
}

impl Basis {
    /// Builds an explicit basis. Inputs are deduplicated and sorted; the
    /// prefix set must already be prefix-closed and both sets must hold λ.
    pub fn new(alphabet_size: usize, prefixes: Vec<Seq>, suffixes: Vec<Seq>) -> Result<Self, HankelError> {
        let basis = Self {
            alphabet_size,
            prefixes: canonical(prefixes),
            suffixes: canonical(suffixes),
            strategy: Strategy::Explicit,
            max_len: 0,
            seed: 0,
        };
        basis.validate()?;
        Ok(basis)
    }

    /// All strings of length ≤ `max_len` on both sides.
    pub fn complete(alphabet_size: usize, max_len: usize) -> Self {
        let all = all_strings(alphabet_size, max_len);
        Self {
            alphabet_size,
            prefixes: all.clone(),
            suffixes: all,
            strategy: Strategy::Explicit,
            max_len,
            seed: 0,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), HankelError> {
        if self.alphabet_size == 0 {
            return Err(HankelError::InvalidBasis("alphabet size must be positive".into()));
        }
        for (name, set) in [("prefix", &self.prefixes), ("suffix", &self.suffixes)] {
            if set.first().map(|w| !w.is_empty()).unwrap_or(true) {
                return Err(HankelError::InvalidBasis(format!("{name} set lacks the empty string")));
            }
            if let Some(w) = set.iter().find(|w| w.iter().any(|&s| s >= self.alphabet_size)) {
                return Err(HankelError::InvalidBasis(format!("{name} {w:?} uses a symbol outside the alphabet")));
            }
        }
        let lookup: HashSet<&[Symbol]> = self.prefixes.iter().map(Vec::as_slice).collect();
        if let Some(w) = self.prefixes.iter().find(|w| !w.is_empty() && !lookup.contains(&w[..w.len() - 1])) {
            return Err(HankelError::InvalidBasis(format!("prefix set is not prefix-closed at {w:?}")));
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn prefixes(&self) -> &[Seq] {
        &self.prefixes
    }

    pub fn suffixes(&self) -> &[Seq] {
        &self.suffixes
    }

    pub fn p(&self) -> usize {
        self.prefixes.len()
    }

    pub fn s(&self) -> usize {
        self.suffixes.len()
    }
}

fn canonical(mut set: Vec<Seq>) -> Vec<Seq> {
    set.sort_by(|a, b| canonical_cmp(a, b));
    set.dedup();
    set
}

fn all_strings(k: usize, max_len: usize) -> Vec<Seq> {
    let mut out = vec![Vec::new()];
    let mut start = 0;
    for _ in 0..max_len {
        let end = out.len();
        for i in start..end {
            for s in 0..k {
                let mut w = out[i].clone();
                w.push(s);
                out.push(w);
            }
        }
        start = end;
    }
    out
}

struct Growth {
    prefixes: HashSet<Seq>,
    suffixes: HashSet<Seq>,
}

impl Growth {
    fn new() -> Self {
        let mut g = Self { prefixes: HashSet::new(), suffixes: HashSet::new() };
        g.prefixes.insert(Vec::new());
        g.suffixes.insert(Vec::new());
        g
    }

    fn add_prefixes(&mut self, w: &[Symbol]) {
        for i in 0..=w.len() {
            if !self.prefixes.contains(&w[..i]) {
                self.prefixes.insert(w[..i].to_vec());
            }
        }
    }

    fn add_suffixes(&mut self, w: &[Symbol]) {
        for i in 0..=w.len() {
            if !self.suffixes.contains(&w[i..]) {
                self.suffixes.insert(w[i..].to_vec());
            }
        }
    }
}

/// Shared closure and size logic for both strategies. `draw` yields one
/// sequence per call.
fn grow_basis<F>(
    alphabet_size: usize,
    p: usize,
    s: usize,
    max_len: usize,
    mut draw: F,
) -> Result<(Vec<Seq>, Vec<Seq>), HankelError>
where
    F: FnMut() -> Result<Seq, HankelError>,
{
    if p == 0 || s == 0 {
        return Err(HankelError::InvalidInput("basis sizes p and s must be at least 1".into()));
    }
    if alphabet_size == 0 {
        return Err(HankelError::InvalidInput("empty alphabet".into()));
    }
    let mut g = Growth::new();
    let exhausted = |g: &Growth, draws| HankelError::BasisExhausted {
        prefixes: g.prefixes.len(),
        suffixes: g.suffixes.len(),
        draws,
    };

    let limit = 10 * p * max_len.max(1);
    let mut draws = 0;
    while g.prefixes.len() < p {
        if draws >= limit {
            return Err(exhausted(&g, draws));
        }
        let mut w = draw()?;
        w.truncate(max_len);
        draws += 1;
        g.add_prefixes(&w);
        g.add_suffixes(&w);
    }

    let limit = draws + 10 * s * max_len.max(1);
    while g.suffixes.len() < s {
        if draws >= limit {
            return Err(exhausted(&g, draws));
        }
        let mut w = draw()?;
        w.truncate(max_len);
        draws += 1;
        g.add_suffixes(&w);
    }
    Ok((canonical(g.prefixes.into_iter().collect()), canonical(g.suffixes.into_iter().collect())))
}

/// Samples strings with a length uniform on `0..=max_len` and i.i.d. uniform
/// symbols, closing under prefixes and suffixes until `|P| ≥ p`, then
/// extending the suffix side until `|S| ≥ s`.
pub fn gen_basis_uniform(alphabet_size: usize, p: usize, s: usize, max_len: usize, seed: u64) -> Result<Basis, HankelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (prefixes, suffixes) = grow_basis(alphabet_size, p, s, max_len, || {
        let len = rng.gen_range(0..=max_len);
        Ok((0..len).map(|_| rng.gen_range(0..alphabet_size)).collect())
    })?;
    Ok(Basis { alphabet_size, prefixes, suffixes, strategy: Strategy::Uniform, max_len, seed })
}

/// Like [`gen_basis_uniform`] but strings are sampled from the oracle's
/// next-symbol distributions.
pub fn gen_basis_oracle<O: Oracle + ?Sized>(oracle: &O, p: usize, s: usize, max_len: usize, seed: u64) -> Result<Basis, HankelError> {
    if !oracle.capabilities().supports_next_dist {
        return Err(OracleError::Capability("next_dist").into());
    }
    let alphabet_size = oracle.alphabet().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (prefixes, suffixes) =
        grow_basis(alphabet_size, p, s, max_len, || Ok(oracle.sample_sequence(&mut rng, max_len)?))?;
    Ok(Basis { alphabet_size, prefixes, suffixes, strategy: Strategy::Oracle, max_len, seed })
}

/// Dispatches on `strategy`; `Explicit` is rejected.
pub fn gen_basis<O: Oracle + ?Sized>(
    oracle: &O,
    strategy: Strategy,
    p: usize,
    s: usize,
    max_len: usize,
    seed: u64,
) -> Result<Basis, HankelError> {
    match strategy {
        Strategy::Uniform => gen_basis_uniform(oracle.alphabet().len(), p, s, max_len, seed),
        Strategy::Oracle => gen_basis_oracle(oracle, p, s, max_len, seed),
        Strategy::Explicit => Err(HankelError::InvalidInput("explicit bases are read from a file".into())),
    }
}
