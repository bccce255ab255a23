//! Black-box sequence oracles.
//!
//! Every oracle answers string log-probability queries; generative ones also
//! answer next-symbol distribution queries over `Σ ∪ {END}` (END last).
//! Probabilities cross every boundary in natural-log space, with
//! `f64::NEG_INFINITY` standing for zero probability.

pub(crate) mod cache;
mod external;
mod noisy;
pub mod protocol;
mod wa_oracle;

use std::collections::HashMap;

use rand::RngCore;
use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol};
use crate::wa::draw_index;

pub use cache::{CachedOracle, CacheStats, QueryCache};
pub use external::{ExternalOracle, Transport, DEFAULT_TIMEOUT};
pub use noisy::NoisyOracle;
pub use wa_oracle::WaOracle;

pub type Seq = Vec<Symbol>;

/// Tolerance on `Σ next_dist − 1` accepted from any backend.
pub const DIST_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt oracle answer: {0}")]
    CorruptAnswer(String),
    #[error("oracle does not support {0}")]
    Capability(&'static str),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("symbol id {symbol} is outside the alphabet of size {alphabet_size}")]
    InvalidSymbol { symbol: Symbol, alphabet_size: usize },
}

impl OracleError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, OracleError::Unavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub supports_next_dist: bool,
    pub max_concurrent_queries: usize,
}

pub trait Oracle: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    fn capabilities(&self) -> Capabilities;

    /// Short stable description used in run manifests.
    fn identity(&self) -> String {
        "anonymous".to_string()
    }

    /// One log-probability slot per input, in input order.
    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>>;

    /// One next-symbol distribution per prefix, END last.
    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        prefixes.iter().map(|_| Err(OracleError::Capability("next_dist"))).collect()
    }

    /// Distributions after every prefix of `seq`, from λ to `seq` itself.
    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        let prefixes: Vec<Seq> = (0..=seq.len()).map(|i| seq[..i].to_vec()).collect();
        self.next_dist_batch(&prefixes).into_iter().collect()
    }

    /// Draws symbols from the next-symbol distribution until END or `max_len`.
    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        if !self.capabilities().supports_next_dist {
            return Err(OracleError::Capability("next_dist"));
        }
        let end = self.alphabet().end();
        let mut seq = Vec::new();
        while seq.len() < max_len {
            let dist = next_dist(self, &seq)?;
            let next = draw_index(rng, &dist);
            if next == end {
                break;
            }
            seq.push(next);
        }
        Ok(seq)
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        (**self).logprob_batch(seqs)
    }
    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        (**self).next_dist_batch(prefixes)
    }
    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).prefix_dists(seq)
    }
    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        (**self).sample_sequence(rng, max_len)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        (**self).logprob_batch(seqs)
    }
    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        (**self).next_dist_batch(prefixes)
    }
    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        (**self).prefix_dists(seq)
    }
    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        (**self).sample_sequence(rng, max_len)
    }
}

/// `log P(w)`; `NEG_INFINITY` for zero-probability strings.
pub fn string_prob<O: Oracle + ?Sized>(oracle: &O, w: &[Symbol]) -> Result<f64, OracleError> {
    oracle.logprob_batch(&[w.to_vec()]).pop().expect("one slot per query")
}

pub fn next_dist<O: Oracle + ?Sized>(oracle: &O, prefix: &[Symbol]) -> Result<Vec<f64>, OracleError> {
    oracle.next_dist_batch(&[prefix.to_vec()]).pop().expect("one slot per query")
}

/// Element-wise [`string_prob`]; duplicates are collapsed before dispatch
/// so the backend sees each distinct sequence once.
pub fn batch_string_prob<O: Oracle + ?Sized>(oracle: &O, ws: &[Seq]) -> Vec<Result<f64, OracleError>> {
    let mut slot_of: HashMap<&[Symbol], usize> = HashMap::with_capacity(ws.len());
    let mut unique: Vec<Seq> = Vec::new();
    let slots: Vec<usize> = ws
        .iter()
        .map(|w| {
            *slot_of.entry(w.as_slice()).or_insert_with(|| {
                unique.push(w.clone());
                unique.len() - 1
            })
        })
        .collect();
    let answers = oracle.logprob_batch(&unique);
    slots.into_iter().map(|i| answers[i].clone()).collect()
}

/// `Σ_i log P(σ_i | σ_<i) + log P(END | w)`, with `P(START) = 1`.
pub fn chain_rule_logprob(dists: &[Vec<f64>], w: &[Symbol]) -> f64 {
    debug_assert_eq!(dists.len(), w.len() + 1);
    let end = dists[0].len() - 1;
    let mut total = 0.0;
    for (dist, &sym) in dists.iter().zip(w.iter().chain(std::iter::once(&end))) {
        let p = dist[sym];
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += p.ln();
    }
    total
}

/// Checks a backend distribution: length `|Σ|+1`, no NaN, entries not below
/// `-1e-9`, total within [`DIST_SUM_TOLERANCE`] of one. Tiny negatives are clamped.
pub fn validate_dist(mut dist: Vec<f64>, alphabet_size: usize) -> Result<Vec<f64>, OracleError> {
    if dist.len() != alphabet_size + 1 {
        return Err(OracleError::CorruptAnswer(format!(
            "distribution has {} entries, expected {}",
            dist.len(),
            alphabet_size + 1
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < -1e-9) {
        return Err(OracleError::CorruptAnswer(format!("invalid probability in {dist:?}")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
        return Err(OracleError::CorruptAnswer(format!("distribution sums to {sum}")));
    }
    for p in &mut dist {
        *p = p.max(0.0);
    }
    Ok(dist)
}

pub(crate) fn check_symbols(alphabet: &Alphabet, seq: &[Symbol]) -> Result<(), OracleError> {
    match seq.iter().find(|&&s| s >= alphabet.len()) {
        Some(&symbol) => Err(OracleError::InvalidSymbol { symbol, alphabet_size: alphabet.len() }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;

    /// Memoryless oracle over {a}: P(a) = P(END) = ½ at every prefix.
    pub(super) struct Coin {
        alphabet: Alphabet,
        pub calls: AtomicUsize,
        pub seen: Mutex<Vec<Seq>>,
    }

    impl Coin {
        pub fn new() -> Self {
            Self { alphabet: Alphabet::new(["a"]).unwrap(), calls: AtomicUsize::new(0), seen: Mutex::new(Vec::new()) }
        }
    }

    impl Oracle for Coin {
        fn alphabet(&self) -> &Alphabet {
            &self.alphabet
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities { supports_next_dist: true, max_concurrent_queries: 1 }
        }
        fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.seen.lock().unwrap().extend(seqs.iter().cloned());
            seqs.iter().map(|s| Ok((s.len() + 1) as f64 * 0.5f64.ln())).collect()
        }
        fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
            prefixes.iter().map(|_| Ok(vec![0.5, 0.5])).collect()
        }
    }

    #[test]
    fn batch_dedups_before_dispatch() {
        let coin = Coin::new();
        let out = batch_string_prob(&coin, &[vec![0], vec![0], vec![0, 0]]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[1]);
        assert_eq!(coin.seen.lock().unwrap().len(), 2);
        assert!(batch_string_prob(&coin, &[]).is_empty());
    }

    #[test]
    fn chain_rule_on_memoryless_dists() {
        let coin = Coin::new();
        let dists = coin.prefix_dists(&[0, 0]).unwrap();
        assert!((chain_rule_logprob(&dists, &[0, 0]) - 3.0 * 0.5f64.ln()).abs() < 1e-15);
        let zero_end = vec![vec![1.0, 0.0]];
        assert_eq!(chain_rule_logprob(&zero_end, &[]), f64::NEG_INFINITY);
    }

    #[test]
    fn validate_dist_contract() {
        assert!(validate_dist(vec![0.5, 0.5], 1).is_ok());
        assert!(matches!(validate_dist(vec![0.5, f64::NAN], 1), Err(OracleError::CorruptAnswer(_))));
        assert!(matches!(validate_dist(vec![0.5, 0.4], 1), Err(OracleError::CorruptAnswer(_))));
        assert!(matches!(validate_dist(vec![1.0], 1), Err(OracleError::CorruptAnswer(_))));
        assert_eq!(validate_dist(vec![1.0, -1e-12], 1).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn logprob_only_oracle_cannot_sample() {
        struct Flat(Alphabet);
        impl Oracle for Flat {
            fn alphabet(&self) -> &Alphabet {
                &self.0
            }
            fn capabilities(&self) -> Capabilities {
                Capabilities { supports_next_dist: false, max_concurrent_queries: 1 }
            }
            fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
                seqs.iter().map(|_| Ok(0.0)).collect()
            }
        }
        let flat = Flat(Alphabet::new(["a"]).unwrap());
        assert_eq!(next_dist(&flat, &[]), Err(OracleError::Capability("next_dist")));
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        assert!(matches!(flat.sample_sequence(&mut rng, 5), Err(OracleError::Capability(_))));
    }
}
