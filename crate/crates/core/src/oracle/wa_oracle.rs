use std::sync::Arc;

use nalgebra::DVector;
use rand::RngCore;

use super::{check_symbols, Capabilities, Oracle, OracleError, Seq};
use crate::alphabet::{Alphabet, Symbol};
use crate::wa::{draw_index, WaError, WeightedAutomaton};

/// Oracle answering from an in-process weighted automaton.
///
/// String queries return `ln A(w)` directly (`-inf` when `A(w) ≤ 0`); next
/// symbol queries normalize the automaton's scores and therefore require a
/// stochastic automaton.
#[derive(Debug, Clone)]
pub struct WaOracle {
    wa: Arc<WeightedAutomaton>,
    identity: String,
}

impl WaOracle {
    pub fn new(wa: WeightedAutomaton) -> Self {
        Self::from_arc(Arc::new(wa))
    }

    pub fn from_arc(wa: Arc<WeightedAutomaton>) -> Self {
        Self { wa, identity: "wa:in-process".to_string() }
    }

    pub fn with_identity(mut self, identity: impl Into<String>) -> Self {
        self.identity = identity.into();
        self
    }

    pub fn automaton(&self) -> &WeightedAutomaton {
        &self.wa
    }
}

fn log_weight(weight: f64) -> f64 {
    if weight > 0.0 {
        weight.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn wa_to_oracle(err: WaError) -> OracleError {
    match err {
        WaError::InvalidSymbol { symbol, alphabet_size } => OracleError::InvalidSymbol { symbol, alphabet_size },
        other => OracleError::CorruptAnswer(other.to_string()),
    }
}

impl Oracle for WaOracle {
    fn alphabet(&self) -> &Alphabet {
        self.wa.alphabet()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_next_dist: self.wa.is_stochastic(), max_concurrent_queries: usize::MAX }
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }

    /// Evaluates the batch in lexicographic order, reusing the configuration
    /// of the longest prefix shared with the previous sequence. Results are
    /// bit-identical to [`WeightedAutomaton::weight`].
    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        let mut out: Vec<Result<f64, OracleError>> = vec![Ok(0.0); seqs.len()];
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_unstable_by(|&a, &b| seqs[a].cmp(&seqs[b]));
        let mut stack: Vec<DVector<f64>> = vec![self.wa.initial_config()];
        let mut current: &[Symbol] = &[];
        for idx in order {
            let seq = seqs[idx].as_slice();
            if let Err(e) = check_symbols(self.wa.alphabet(), seq) {
                out[idx] = Err(e);
                continue;
            }
            let shared = current.iter().zip(seq).take_while(|(a, b)| a == b).count();
            stack.truncate(shared + 1);
            for &sym in &seq[shared..] {
                let next = self.wa.matrices()[sym].tr_mul(stack.last().expect("non-empty stack"));
                stack.push(next);
            }
            current = seq;
            out[idx] = Ok(log_weight(self.wa.terminal_weight(stack.last().expect("non-empty stack"))));
        }
        out
    }

    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        if !self.wa.is_stochastic() {
            return prefixes.iter().map(|_| Err(OracleError::Capability("next_dist"))).collect();
        }
        prefixes
            .iter()
            .map(|p| {
                let config = self.wa.rescaled_config(p).map_err(wa_to_oracle)?;
                self.wa.next_distribution(&config).map_err(wa_to_oracle)
            })
            .collect()
    }

    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        if !self.wa.is_stochastic() {
            return Err(OracleError::Capability("next_dist"));
        }
        check_symbols(self.wa.alphabet(), seq)?;
        let mut config = self.wa.initial_config();
        let mut out = Vec::with_capacity(seq.len() + 1);
        out.push(self.wa.next_distribution(&config).map_err(wa_to_oracle)?);
        for &sym in seq {
            config = self.wa.advance_rescaled(&config, sym).map_err(wa_to_oracle)?;
            out.push(self.wa.next_distribution(&config).map_err(wa_to_oracle)?);
        }
        Ok(out)
    }

    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        if !self.wa.is_stochastic() {
            return Err(OracleError::Capability("next_dist"));
        }
        let end = self.wa.alphabet().end();
        let mut config = self.wa.initial_config();
        let mut seq = Vec::new();
        while seq.len() < max_len {
            let dist = self.wa.next_distribution(&config).map_err(wa_to_oracle)?;
            let next = draw_index(rng, &dist);
            if next == end {
                break;
            }
            config = self.wa.advance_rescaled(&config, next).map_err(wa_to_oracle)?;
            seq.push(next);
        }
        Ok(seq)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::{chain_rule_logprob, next_dist, string_prob};
    use crate::wa::fixtures::{chain_ab, geometric, two_state};

    #[test]
    fn string_prob_examples() {
        let oracle = WaOracle::new(two_state());
        assert!((string_prob(&oracle, &[0]).unwrap() - (1.0f64 / 24.0).ln()).abs() < 1e-12);
        assert_eq!(string_prob(&oracle, &[]).unwrap(), f64::NEG_INFINITY);
        let a = string_prob(&oracle, &[0, 1]).unwrap();
        let b = string_prob(&oracle, &[0, 1]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn next_dist_examples() {
        let oracle = WaOracle::new(two_state());
        let d = next_dist(&oracle, &[]).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12 && (d[1] - 1.0 / 3.0).abs() < 1e-12 && d[2] == 0.0);
        let d = next_dist(&oracle, &[0]).unwrap();
        for (got, want) in d.iter().zip([9.0 / 16.0, 3.0 / 8.0, 1.0 / 16.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let coin = WaOracle::new(geometric(0.5));
        for prefix in [vec![], vec![0], vec![0, 0, 0]] {
            let d = next_dist(&coin, &prefix).unwrap();
            assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn chain_rule_agrees_with_weights_on_all_short_strings() {
        let oracle = WaOracle::new(two_state());
        let mut level: Vec<Seq> = vec![vec![]];
        for _ in 0..=6 {
            for w in &level {
                let direct = oracle.automaton().weight(w).unwrap();
                let via_chain = chain_rule_logprob(&oracle.prefix_dists(w).unwrap(), w).exp();
                assert!((direct - via_chain).abs() <= 1e-9);
                let lp = string_prob(&oracle, w).unwrap();
                assert!((lp.exp() - direct).abs() <= 1e-9);
            }
            level = level.iter().flat_map(|w| (0..2).map(move |s| [w.as_slice(), &[s]].concat())).collect();
        }
    }

    #[test]
    fn batch_is_bit_identical_to_direct_weights() {
        let oracle = WaOracle::new(two_state());
        let seqs: Vec<Seq> = vec![vec![0, 1, 1], vec![0], vec![1, 0], vec![0, 1], vec![], vec![0, 1, 1, 0], vec![0, 5]];
        let out = oracle.logprob_batch(&seqs);
        for (seq, got) in seqs.iter().zip(&out).take(6) {
            let want = log_weight(oracle.automaton().weight(seq).unwrap());
            assert_eq!(got.as_ref().unwrap().to_bits(), want.to_bits());
        }
        assert!(matches!(out[6], Err(OracleError::InvalidSymbol { symbol: 5, .. })));
    }

    #[test]
    fn sampling_matches_generic_path() {
        let oracle = WaOracle::new(chain_ab());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(oracle.sample_sequence(&mut rng, 10).unwrap(), vec![0, 1]);
    }
}
