//! n-gram baseline trained on sequences sampled from an oracle.
//!
//! Contexts are the last `n−1` symbols, left-padded with START. Prediction
//! uses the longest context suffix seen in training and falls back to the
//! uniform distribution over `Σ ∪ {END}`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol};
use crate::oracle::{chain_rule_logprob, check_symbols, Capabilities, Oracle, OracleError, Seq};
use crate::wa::draw_index;

pub const MIN_N: usize = 2;
pub const MAX_N: usize = 20;
/// Desk-scale sampling budget in symbols.
pub const DEFAULT_BUDGET: usize = 100_000;

#[derive(Debug, Error)]
pub enum NGramError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Samples sequences until their total length exceeds `symbol_budget`.
pub fn sample_corpus<O: Oracle + ?Sized>(oracle: &O, symbol_budget: usize, max_len: usize, seed: u64) -> Result<Vec<Seq>, NGramError> {
    if !oracle.capabilities().supports_next_dist {
        return Err(OracleError::Capability("next_dist").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let mut total = 0;
    loop {
        let seq = oracle.sample_sequence(&mut rng, max_len)?;
        total += seq.len();
        corpus.push(seq);
        if total > symbol_budget {
            return Ok(corpus);
        }
        if corpus.len() > symbol_budget.saturating_mul(1000).max(1_000_000) {
            return Err(NGramError::InvalidInput("oracle keeps emitting empty sequences".into()));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    n: usize,
    alphabet_size: usize,
    /// `levels[m-1]`: contexts of length `m` → counts over `Σ ∪ {END}`.
    levels: Vec<HashMap<Vec<Symbol>, Vec<u64>>>,
}

impl NGramModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Id used for START padding in stored contexts.
    pub fn start_id(&self) -> Symbol {
        self.alphabet_size + 1
    }

    fn from_full_contexts(n: usize, alphabet_size: usize, full: HashMap<Vec<Symbol>, Vec<u64>>) -> Self {
        let mut levels = vec![HashMap::new(); n - 1];
        for (ctx, counts) in &full {
            for m in 1..n - 1 {
                let row = levels[m - 1].entry(ctx[ctx.len() - m..].to_vec()).or_insert_with(|| vec![0; alphabet_size + 1]);
                for (acc, c) in row.iter_mut().zip(counts) {
                    *acc += c;
                }
            }
        }
        levels[n - 2] = full;
        Self { n, alphabet_size, levels }
    }

    fn padded_context(&self, prefix: &[Symbol]) -> Vec<Symbol> {
        let m = self.n - 1;
        let mut ctx = vec![self.start_id(); m.saturating_sub(prefix.len())];
        ctx.extend_from_slice(&prefix[prefix.len().saturating_sub(m)..]);
        ctx
    }

    /// Symbols seen in training, END excluded.
    pub fn training_symbols(&self) -> u64 {
        self.levels[0].values().map(|c| c[..self.alphabet_size].iter().sum::<u64>()).sum()
    }

    /// Persists the full-length contexts: header `n |Σ|`, then
    /// `context-ids<TAB>symbol-id<TAB>count` lines (START is id `|Σ|+1`,
    /// END is id `|Σ|`), sorted for stable output.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n, self.alphabet_size)?;
        let mut rows: Vec<_> = self.levels[self.n - 2].iter().collect();
        rows.sort();
        for (ctx, counts) in rows {
            let ctx: Vec<String> = ctx.iter().map(ToString::to_string).collect();
            let ctx = ctx.join(" ");
            for (sym, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
                writeln!(out, "{ctx}\t{sym}\t{c}")?;
            }
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, NGramError> {
        let err = |line: usize, message: String| NGramError::Parse { line, message };
        let mut lines = input.lines();
        let header = lines.next().transpose()?.ok_or_else(|| err(1, "empty model file".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(1, format!("invalid header field {t:?}"))))
            .collect::<Result<_, _>>()?;
        let [n, k] = nums[..] else {
            return Err(err(1, "header must be `n |Σ|`".into()));
        };
        if !(MIN_N..=MAX_N).contains(&n) || k == 0 {
            return Err(err(1, format!("unsupported n={n} or alphabet size {k}")));
        }
        let mut full: HashMap<Vec<Symbol>, Vec<u64>> = HashMap::new();
        for (i, line) in lines.enumerate() {
            let no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [ctx, sym, count] = fields[..] else {
                return Err(err(no, "expected context<TAB>symbol<TAB>count".into()));
            };
            let ctx: Vec<Symbol> = ctx
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(no, format!("invalid context id {t:?}"))))
                .collect::<Result<_, _>>()?;
            if ctx.len() != n - 1 || ctx.iter().any(|&c| c == k || c > k + 1) {
                return Err(err(no, format!("context must be {} ids from Σ or START", n - 1)));
            }
            let sym: usize = sym.parse().map_err(|_| err(no, format!("invalid symbol {sym:?}")))?;
            let count: u64 = count.trim().parse().map_err(|_| err(no, format!("invalid count {count:?}")))?;
            if sym > k || count == 0 {
                return Err(err(no, "symbol out of range or zero count".into()));
            }
            full.entry(ctx).or_insert_with(|| vec![0; k + 1])[sym] += count;
        }
        Ok(Self::from_full_contexts(n, k, full))
    }
}

pub fn train_ngram(corpus: &[Seq], n: usize, alphabet_size: usize) -> Result<NGramModel, NGramError> {
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(NGramError::InvalidInput(format!("n={n} outside {MIN_N}..={MAX_N}")));
    }
    if corpus.is_empty() {
        return Err(NGramError::InvalidInput("empty corpus".into()));
    }
    let end = alphabet_size;
    let start = alphabet_size + 1;
    let mut full: HashMap<Vec<Symbol>, Vec<u64>> = HashMap::new();
    for seq in corpus {
        if let Some(&bad) = seq.iter().find(|&&s| s >= alphabet_size) {
            return Err(NGramError::InvalidInput(format!("symbol id {bad} outside alphabet of size {alphabet_size}")));
        }
        let mut padded = vec![start; n - 1];
        padded.extend_from_slice(seq);
        for (i, &next) in seq.iter().chain(std::iter::once(&end)).enumerate() {
            full.entry(padded[i..i + n - 1].to_vec()).or_insert_with(|| vec![0; alphabet_size + 1])[next] += 1;
        }
    }
    Ok(NGramModel::from_full_contexts(n, alphabet_size, full))
}

/// Distribution over `Σ ∪ {END}` from the longest seen context suffix.
pub fn ngram_next_dist(model: &NGramModel, prefix: &[Symbol]) -> Vec<f64> {
    let ctx = model.padded_context(prefix);
    for m in (1..model.n).rev() {
        if let Some(counts) = model.levels[m - 1].get(&ctx[ctx.len() - m..]) {
            let total: u64 = counts.iter().sum();
            if total > 0 {
                return counts.iter().map(|&c| c as f64 / total as f64).collect();
            }
        }
    }
    vec![1.0 / (model.alphabet_size + 1) as f64; model.alphabet_size + 1]
}

/// Serves a trained model through the oracle interface.
pub struct NGramOracle {
    model: NGramModel,
    alphabet: Alphabet,
    identity: String,
}

impl NGramOracle {
    pub fn new(model: NGramModel) -> Self {
        let alphabet = Alphabet::numeric(model.alphabet_size).expect("positive alphabet size");
        Self { identity: format!("ngram:n={}", model.n), model, alphabet }
    }

    pub fn with_identity(mut self, identity: impl Into<String>) -> Self {
        self.identity = identity.into();
        self
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }
}

impl Oracle for NGramOracle {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_next_dist: true, max_concurrent_queries: usize::MAX }
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        seqs.iter().map(|w| Ok(chain_rule_logprob(&self.prefix_dists(w)?, w))).collect()
    }

    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        prefixes
            .iter()
            .map(|p| {
                check_symbols(&self.alphabet, p)?;
                Ok(ngram_next_dist(&self.model, p))
            })
            .collect()
    }

    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        check_symbols(&self.alphabet, seq)?;
        Ok((0..=seq.len()).map(|i| ngram_next_dist(&self.model, &seq[..i])).collect())
    }

    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        let mut seq = Vec::new();
        while seq.len() < max_len {
            let next = draw_index(rng, &ngram_next_dist(&self.model, &seq));
            if next == self.model.alphabet_size {
                break;
            }
            seq.push(next);
        }
        Ok(seq)
    }
}

impl crate::metrics::RankingProvider for NGramModel {
    fn prefix_scores(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, crate::metrics::MetricError> {
        Ok((0..=seq.len()).map(|i| ngram_next_dist(self, &seq[..i])).collect())
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    use super::*;
    use crate::metrics::argmax;
    use crate::oracle::{string_prob, WaOracle};
    use crate::wa::fixtures::{chain_ab, two_state};

    fn hand_model() -> NGramModel {
        train_ngram(&[vec![0, 0, 1], vec![0, 1]], 2, 2).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn hand_counts() {
        let m = hand_model();
        assert!(close(&ngram_next_dist(&m, &[0, 0]), &[1.0 / 3.0, 2.0 / 3.0, 0.0]));
        assert!(close(&ngram_next_dist(&m, &[0, 1]), &[0.0, 0.0, 1.0]));
        assert!(close(&ngram_next_dist(&m, &[]), &[1.0, 0.0, 0.0]));
        let single = train_ngram(&[vec![0]], 2, 2).unwrap();
        assert!(close(&ngram_next_dist(&single, &[]), &[1.0, 0.0, 0.0]));
        assert!(close(&ngram_next_dist(&single, &[0]), &[0.0, 0.0, 1.0]));
        assert!(close(&ngram_next_dist(&single, &[1]), &[1.0 / 3.0; 3]));
        assert_eq!(m.training_symbols(), 5);
    }

    #[test]
    fn backoff_to_shorter_context() {
        let m = train_ngram(&[vec![0, 1, 1], vec![1, 0]], 3, 2).unwrap();
        // Context (0,0) is unseen as a pair, so the single-symbol context 0 decides.
        let d = ngram_next_dist(&m, &[0, 0]);
        assert!(close(&d, &[0.0, 0.5, 0.5]));
        let zero = &m.levels[0][&vec![0]];
        let total: u64 = zero.iter().sum();
        assert!(close(&d, &zero.iter().map(|&c| c as f64 / total as f64).collect::<Vec<_>>()));
    }

    #[test]
    fn corpus_budget_is_strictly_exceeded() {
        let oracle = WaOracle::new(chain_ab());
        assert_eq!(sample_corpus(&oracle, 5, 100, 0).unwrap().len(), 3);
        assert_eq!(sample_corpus(&oracle, 0, 100, 0).unwrap().len(), 1);
    }

    /// `E[#a] / E[|w|]` by summing over lengths of an explicit transfer recursion.
    fn stationary_a_frequency() -> f64 {
        let wa = two_state();
        let m_a = wa.matrix(0).unwrap().clone();
        let m: DMatrix<f64> = wa.matrices().iter().sum();
        let mut forward: Vec<DVector<f64>> = vec![wa.alpha0().clone()];
        for _ in 0..30 {
            let next = m.tr_mul(forward.last().unwrap());
            forward.push(next);
        }
        let mut backward: Vec<DVector<f64>> = vec![wa.alpha_inf().clone()];
        for _ in 0..30 {
            let next = &m * backward.last().unwrap();
            backward.push(next);
        }
        let (mut expected_a, mut expected_len) = (0.0, 0.0);
        for len in 1..=30 {
            expected_len += len as f64 * forward[len].dot(wa.alpha_inf());
            for i in 0..len {
                expected_a += forward[i].dot(&(&m_a * &backward[len - 1 - i]));
            }
        }
        expected_a / expected_len
    }

    #[test]
    fn corpus_unigram_frequency() {
        let oracle = WaOracle::new(two_state());
        let corpus = sample_corpus(&oracle, 100_000, 100, 4).unwrap();
        let total: usize = corpus.iter().map(Vec::len).sum();
        let a = corpus.iter().flatten().filter(|&&s| s == 0).count();
        assert!(total > 100_000);
        assert!((a as f64 / total as f64 - stationary_a_frequency()).abs() < 0.01);
    }

    #[test]
    fn persistence_round_trip() {
        let corpus = sample_corpus(&WaOracle::new(two_state()), 2000, 100, 1).unwrap();
        let m = train_ngram(&corpus, 4, 2).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("4 2\n"));
        assert!(text.contains("\n3 3 3\t"));
        assert_eq!(NGramModel::read(buf.as_slice()).unwrap(), m);
        assert!(matches!(NGramModel::read("4 2\n3 3\t0\t1\n".as_bytes()), Err(NGramError::Parse { line: 2, .. })));
    }

    #[test]
    fn memorizes_a_single_sequence() {
        let seq = vec![0, 2, 1, 1, 0, 2];
        let m = train_ngram(std::slice::from_ref(&seq), 7, 3).unwrap();
        let mut path = Vec::new();
        loop {
            let next = argmax(&ngram_next_dist(&m, &path));
            if next == 3 {
                break;
            }
            path.push(next);
        }
        assert_eq!(path, seq);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(train_ngram(&[vec![0]], 1, 2).is_err());
        assert!(train_ngram(&[vec![0]], 21, 2).is_err());
        assert!(train_ngram(&[], 2, 2).is_err());
        assert!(train_ngram(&[vec![3]], 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn distributions_and_chain_rule(
            corpus in proptest::collection::vec(proptest::collection::vec(0usize..3, 0..8), 1..12),
            n in 2usize..6,
            probe in proptest::collection::vec(0usize..3, 0..10),
        ) {
            let m = train_ngram(&corpus, n, 3).unwrap();
            let oracle = NGramOracle::new(m.clone());
            let mut direct = 0.0;
            let mut zero = false;
            for i in 0..=probe.len() {
                let d = ngram_next_dist(&m, &probe[..i]);
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                let p = d[probe.get(i).copied().unwrap_or(3)];
                if p == 0.0 { zero = true; } else { direct += p.ln(); }
            }
            let via_oracle = string_prob(&oracle, &probe).unwrap();
            if zero {
                prop_assert_eq!(via_oracle, f64::NEG_INFINITY);
            } else {
                prop_assert_eq!(via_oracle.to_bits(), direct.to_bits());
            }
        }
    }
}
