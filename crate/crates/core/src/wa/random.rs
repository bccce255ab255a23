use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{WaError, WeightedAutomaton};
use crate::alphabet::Alphabet;

const MAX_ATTEMPTS: usize = 100;

/// Shape of a random probabilistic automaton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfaParams {
    pub states: usize,
    pub alphabet_size: usize,
    /// Probability that a symbol is enabled in a given state.
    pub symbol_sparsity: f64,
    /// Probability that an enabled symbol leads to a given next state.
    pub transition_sparsity: f64,
}

impl PfaParams {
    pub fn new(states: usize, alphabet_size: usize) -> Self {
        Self { states, alphabet_size, symbol_sparsity: 1.0, transition_sparsity: 1.0 }
    }

    pub fn sparsity(mut self, symbol: f64, transition: f64) -> Self {
        self.symbol_sparsity = symbol;
        self.transition_sparsity = transition;
        self
    }
}

/// Generates a random stochastic automaton with a single initial state.
///
/// Each state stops with probability drawn from `[0.05, 0.3)`; the remaining
/// mass is split over a random set of `(symbol, next state)` pairs with
/// uniform random weights. Draws in which some state is unreachable from the
/// initial one are discarded.
pub fn random_pfa(params: PfaParams, seed: u64) -> Result<WeightedAutomaton, WaError> {
    let PfaParams { states, alphabet_size, symbol_sparsity, transition_sparsity } = params;
    if states == 0 || alphabet_size == 0 {
        return Err(WaError::Invalid("states and alphabet size must be positive".into()));
    }
    let in_range = |x: f64| x > 0.0 && x <= 1.0;
    if !in_range(symbol_sparsity) || !in_range(transition_sparsity) {
        return Err(WaError::Invalid("sparsities must lie in (0, 1]".into()));
    }
    let alphabet = Alphabet::numeric(alphabet_size).expect("non-empty alphabet");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut matrices = vec![DMatrix::<f64>::zeros(states, states); alphabet_size];
        let mut stop = DVector::<f64>::zeros(states);
        for q in 0..states {
            let mut pairs = Vec::new();
            for sym in 0..alphabet_size {
                if rng.gen::<f64>() >= symbol_sparsity {
                    continue;
                }
                let before = pairs.len();
                for target in 0..states {
                    if rng.gen::<f64>() < transition_sparsity {
                        pairs.push((sym, target));
                    }
                }
                if pairs.len() == before {
                    pairs.push((sym, rng.gen_range(0..states)));
                }
            }
            if pairs.is_empty() {
                pairs.push((rng.gen_range(0..alphabet_size), rng.gen_range(0..states)));
            }
            let weights: Vec<f64> = pairs.iter().map(|_| 1.0 - rng.gen::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let halt = 0.05 + 0.25 * rng.gen::<f64>();
            for (&(sym, target), w) in pairs.iter().zip(&weights) {
                matrices[sym][(q, target)] += (1.0 - halt) * w / total;
            }
            stop[q] = halt;
        }
        if all_reachable(&matrices, states) {
            let mut alpha0 = DVector::zeros(states);
            alpha0[0] = 1.0;
            return WeightedAutomaton::new(alphabet, alpha0, matrices, stop, true);
        }
    }
    Err(WaError::GenerationFailed { attempts: MAX_ATTEMPTS })
}

fn all_reachable(matrices: &[DMatrix<f64>], states: usize) -> bool {
    let mut seen = vec![false; states];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(q) = queue.pop_front() {
        for m in matrices {
            for target in 0..states {
                if m[(q, target)] > 0.0 && !seen[target] {
                    seen[target] = true;
                    queue.push_back(target);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}
