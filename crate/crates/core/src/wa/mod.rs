//! Weighted automata in linear representation `⟨α₀, (M_σ), α∞⟩`.
//!
//! A string `w = σ₁…σₙ` is weighted by `α₀ᵀ M_σ₁ ⋯ M_σₙ α∞`. Evaluation walks
//! left to right with vector–matrix products, so `M_w` is never formed. For
//! stochastic automata the normalized terminal vector
//! `α̃∞ = (Id − Σ_σ M_σ)⁻¹ α∞` turns a configuration into next-symbol
//! probabilities.

mod document;
mod random;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol};

pub use document::DocumentError;
pub use random::{random_pfa, PfaParams};

/// Condition number above which the normalizer system is treated as singular.
pub const MAX_NORMALIZER_CONDITION: f64 = 1e12;
/// Denominators smaller than this make normalized next-symbol scores undefined.
pub const MIN_NORMALIZER_MASS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum WaError {
    #[error("symbol id {symbol} is outside the alphabet of size {alphabet_size}")]
    InvalidSymbol { symbol: Symbol, alphabet_size: usize },
    #[error("invalid automaton: {0}")]
    Invalid(String),
    #[error("automaton is not stochastic: {0}")]
    NonStochastic(String),
    #[error("random automaton generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Solution of `(Id − Σ M_σ) x = α∞`.
#[derive(Debug, Clone)]
pub struct TerminalTilde {
    pub vector: DVector<f64>,
    /// Set when the system was singular or ill-conditioned and `vector` is
    /// the minimum-norm least-squares solution instead of an exact solve.
    pub singular_normalizer: bool,
}

#[derive(Debug, Clone)]
struct Normalizer {
    tilde: TerminalTilde,
    /// Column σ holds `M_σ α̃∞`.
    symbol_tilde: DMatrix<f64>,
}

/// Raw next-symbol scores for one prefix: entries `0..|Σ|` are
/// `α·M_σ·α̃∞`, the last entry is `α·α∞` (END).
#[derive(Debug, Clone, PartialEq)]
pub struct NextSymbolScores {
    pub raw: Vec<f64>,
    /// `α·α̃∞`, the probability mass of all continuations of the prefix.
    pub mass: f64,
    pub singular_normalizer: bool,
}

impl NextSymbolScores {
    /// Scores divided by the continuation mass, or `None` when the mass is
    /// numerically zero.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        if self.mass.abs() > MIN_NORMALIZER_MASS {
            Some(self.raw.iter().map(|s| s / self.mass).collect())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedAutomaton {
    alphabet: Alphabet,
    alpha0: DVector<f64>,
    alpha_inf: DVector<f64>,
    matrices: Vec<DMatrix<f64>>,
    stochastic: bool,
    normalizer: OnceLock<Normalizer>,
}

impl WeightedAutomaton {
    pub fn new(
        alphabet: Alphabet,
        alpha0: DVector<f64>,
        matrices: Vec<DMatrix<f64>>,
        alpha_inf: DVector<f64>,
        stochastic: bool,
    ) -> Result<Self, WaError> {
        let r = alpha0.len();
        if r == 0 {
            return Err(WaError::Invalid("rank must be positive".into()));
        }
        if alpha_inf.len() != r {
            return Err(WaError::Invalid(format!(
                "alphaInf has length {}, expected {r}",
                alpha_inf.len()
            )));
        }
        if matrices.len() != alphabet.len() {
            return Err(WaError::Invalid(format!(
                "{} transition matrices for an alphabet of {} symbols",
                matrices.len(),
                alphabet.len()
            )));
        }
        for (sym, m) in matrices.iter().enumerate() {
            if m.nrows() != r || m.ncols() != r {
                return Err(WaError::Invalid(format!(
                    "matrix for symbol {sym} is {}x{}, expected {r}x{r}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let finite = alpha0.iter().chain(alpha_inf.iter()).all(|x| x.is_finite())
            && matrices.iter().all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(WaError::Invalid("non-finite entry".into()));
        }
        Ok(Self { alphabet, alpha0, alpha_inf, matrices, stochastic, normalizer: OnceLock::new() })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Number of states.
    pub fn rank(&self) -> usize {
        self.alpha0.len()
    }

    pub fn alpha0(&self) -> &DVector<f64> {
        &self.alpha0
    }

    pub fn alpha_inf(&self) -> &DVector<f64> {
        &self.alpha_inf
    }

    pub fn matrix(&self, symbol: Symbol) -> Option<&DMatrix<f64>> {
        self.matrices.get(symbol)
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Returns a copy carrying a different stochastic claim.
    pub fn with_stochastic(mut self, stochastic: bool) -> Self {
        self.stochastic = stochastic;
        self
    }

    fn check(&self, symbol: Symbol) -> Result<(), WaError> {
        if symbol < self.alphabet.len() {
            Ok(())
        } else {
            Err(WaError::InvalidSymbol { symbol, alphabet_size: self.alphabet.len() })
        }
    }

    /// Configuration after the empty prefix, `α₀ᵀ` (stored as a column).
    pub fn initial_config(&self) -> DVector<f64> {
        self.alpha0.clone()
    }

    /// `config ← configᵀ M_σ`.
    pub fn advance(&self, config: &DVector<f64>, symbol: Symbol) -> Result<DVector<f64>, WaError> {
        self.check(symbol)?;
        Ok(self.matrices[symbol].tr_mul(config))
    }

    /// `α₀ᵀ M_prefix`, the configuration reached after reading `prefix`.
    pub fn config(&self, prefix: &[Symbol]) -> Result<DVector<f64>, WaError> {
        let mut config = self.initial_config();
        for &sym in prefix {
            config = self.advance(&config, sym)?;
        }
        Ok(config)
    }

    /// `α₀ᵀ M_w α∞`.
    pub fn weight(&self, w: &[Symbol]) -> Result<f64, WaError> {
        Ok(self.config(w)?.dot(&self.alpha_inf))
    }

    /// Weight of the string whose configuration is `config`.
    pub fn terminal_weight(&self, config: &DVector<f64>) -> f64 {
        config.dot(&self.alpha_inf)
    }

    fn normalizer(&self) -> &Normalizer {
        self.normalizer.get_or_init(|| {
            let tilde = solve_terminal_tilde(&self.matrices, &self.alpha_inf);
            let r = self.rank();
            let mut symbol_tilde = DMatrix::zeros(r, self.matrices.len());
            for (sym, m) in self.matrices.iter().enumerate() {
                symbol_tilde.set_column(sym, &(m * &tilde.vector));
            }
            Normalizer { tilde, symbol_tilde }
        })
    }

    /// `α̃∞ = (Id − Σ_σ M_σ)⁻¹ α∞`, computed once and cached.
    pub fn terminal_tilde(&self) -> &TerminalTilde {
        &self.normalizer().tilde
    }

    /// Next-symbol scores for the configuration `config`.
    pub fn scores_from_config(&self, config: &DVector<f64>) -> NextSymbolScores {
        let norm = self.normalizer();
        let mut raw: Vec<f64> = norm.symbol_tilde.tr_mul(config).iter().copied().collect();
        raw.push(config.dot(&self.alpha_inf));
        NextSymbolScores {
            raw,
            mass: config.dot(&norm.tilde.vector),
            singular_normalizer: norm.tilde.singular_normalizer,
        }
    }

    pub fn next_symbol_scores(&self, prefix: &[Symbol]) -> Result<NextSymbolScores, WaError> {
        Ok(self.scores_from_config(&self.config(prefix)?))
    }

    /// Like [`advance`](Self::advance), then rescales the configuration to
    /// unit max-norm. Ratios of scores (rankings and normalized
    /// probabilities) are unchanged; long prefixes no longer underflow.
    pub fn advance_rescaled(&self, config: &DVector<f64>, symbol: Symbol) -> Result<DVector<f64>, WaError> {
        let mut next = self.advance(config, symbol)?;
        let scale = next.amax();
        if scale > 0.0 && scale.is_finite() {
            next /= scale;
        }
        Ok(next)
    }

    /// Configuration after `prefix`, up to a positive factor.
    pub fn rescaled_config(&self, prefix: &[Symbol]) -> Result<DVector<f64>, WaError> {
        let mut config = self.initial_config();
        for &sym in prefix {
            config = self.advance_rescaled(&config, sym)?;
        }
        Ok(config)
    }

    /// Scores for every prefix of `seq`, from the empty prefix to `seq`
    /// itself. Each entry is scaled by a positive per-prefix factor (see
    /// [`advance_rescaled`](Self::advance_rescaled)).
    pub fn prefix_scores(&self, seq: &[Symbol]) -> Result<Vec<NextSymbolScores>, WaError> {
        let mut config = self.initial_config();
        let mut out = Vec::with_capacity(seq.len() + 1);
        out.push(self.scores_from_config(&config));
        for &sym in seq {
            config = self.advance_rescaled(&config, sym)?;
            out.push(self.scores_from_config(&config));
        }
        Ok(out)
    }

    /// Next-symbol probability vector (END last) for a stochastic automaton,
    /// with negatives down to `-1e-6` clamped to zero. `config` may be scaled
    /// by any positive factor.
    pub fn next_distribution(&self, config: &DVector<f64>) -> Result<Vec<f64>, WaError> {
        let scores = self.scores_from_config(config);
        let probs = scores.normalized().ok_or_else(|| {
            WaError::NonStochastic(format!("continuation mass {} is numerically zero", scores.mass))
        })?;
        let sum: f64 = probs.iter().sum();
        if let Some(neg) = probs.iter().copied().find(|&p| p < -1e-6 || !p.is_finite()) {
            return Err(WaError::NonStochastic(format!("next-symbol probability {neg}")));
        }
        if (sum - 1.0).abs() > 1e-4 {
            return Err(WaError::NonStochastic(format!("next-symbol probabilities sum to {sum}")));
        }
        Ok(probs.into_iter().map(|p| p.max(0.0)).collect())
    }

    /// Draws a string by repeatedly sampling the next symbol until END or
    /// `max_len` symbols.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> Result<Vec<Symbol>, WaError> {
        if !self.stochastic {
            return Err(WaError::NonStochastic("automaton is not flagged stochastic".into()));
        }
        let mut seq = Vec::new();
        let mut config = self.initial_config();
        while seq.len() < max_len {
            let dist = self.next_distribution(&config)?;
            let next = draw_index(rng, &dist);
            if next == self.alphabet.end() {
                break;
            }
            config = self.advance_rescaled(&config, next)?;
            seq.push(next);
        }
        Ok(seq)
    }

    pub fn sample_sequence(&self, seed: u64, max_len: usize) -> Result<Vec<Symbol>, WaError> {
        self.sample_with(&mut ChaCha8Rng::seed_from_u64(seed), max_len)
    }

    /// Writes the automaton as a WA document.
    pub fn to_document(&self) -> String {
        document::write(self)
    }

    pub fn from_document(text: &str) -> Result<Self, WaError> {
        document::read(text)
    }
}

fn solve_terminal_tilde(matrices: &[DMatrix<f64>], alpha_inf: &DVector<f64>) -> TerminalTilde {
    let r = alpha_inf.len();
    let mut system = DMatrix::<f64>::identity(r, r);
    for m in matrices {
        system -= m;
    }
    let svd = system.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    let well_conditioned = min > 0.0 && max / min <= MAX_NORMALIZER_CONDITION;
    if well_conditioned {
        if let Some(x) = system.lu().solve(alpha_inf) {
            return TerminalTilde { vector: x, singular_normalizer: false };
        }
    }
    let eps = (max * 1e-12).max(f64::MIN_POSITIVE);
    let vector = svd.solve(alpha_inf, eps).unwrap_or_else(|_| DVector::zeros(r));
    TerminalTilde { vector, singular_normalizer: true }
}

/// Samples an index from nonnegative weights (not necessarily normalized).
/// Falls back to the last positive entry if rounding leaves the draw unplaced.
pub(crate) fn draw_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last_positive = weights.len() - 1;
    for (i, &w) in weights.iter().enumerate() {
        let w = w.max(0.0);
        if w > 0.0 {
            last_positive = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last_positive
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The two-state automaton over {a, b} used throughout the tests.
    pub fn two_state() -> WeightedAutomaton {
        WeightedAutomaton::new(
            Alphabet::new(["a", "b"]).unwrap(),
            DVector::from_vec(vec![1.0, 0.0]),
            vec![
                DMatrix::from_row_slice(2, 2, &[0.5, 1.0 / 6.0, 0.0, 0.25]),
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / 3.0, 0.25, 0.25]),
            ],
            DVector::from_vec(vec![0.0, 0.25]),
            true,
        )
        .unwrap()
    }

    /// Emits "ab" with probability one.
    pub fn chain_ab() -> WeightedAutomaton {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 1.0;
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 2)] = 1.0;
        WeightedAutomaton::new(
            Alphabet::new(["a", "b"]).unwrap(),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            vec![a, b],
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            true,
        )
        .unwrap()
    }

    pub fn geometric(p: f64) -> WeightedAutomaton {
        WeightedAutomaton::new(
            Alphabet::new(["a"]).unwrap(),
            DVector::from_vec(vec![1.0]),
            vec![DMatrix::from_element(1, 1, p)],
            DVector::from_vec(vec![1.0 - p]),
            true,
        )
        .unwrap()
    }
}
