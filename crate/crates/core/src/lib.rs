//! Distillation of weighted automata from black-box sequence models.
//!
//! The pipeline samples a prefix/suffix basis, fills Hankel sub-blocks with
//! oracle answers, factorizes the block with a truncated SVD and reads off a
//! weighted automaton. Distilled automata are scored against the oracle with
//! NDCG and WER-D, and compared against an n-gram baseline.

pub mod alphabet;
pub mod hankel;
pub mod metrics;
pub mod ngram;
pub mod oracle;
pub mod pautomac;
pub mod spectral;
pub mod wa;

pub use alphabet::{Alphabet, Symbol};
pub use hankel::{Basis, HankelBlocks, HankelError};
pub use metrics::{EvalSet, MetricError, MetricResult, RankingProvider};
pub use ngram::{NGramError, NGramModel, NGramOracle};
pub use oracle::{Oracle, OracleError};
pub use spectral::{SpectralError, SpectrumReport};
pub use wa::{WaError, WeightedAutomaton};
