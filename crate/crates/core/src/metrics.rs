//! NDCG_n and WER-D of a candidate's next-symbol ranking against an
//! oracle's next-symbol distribution, over every prefix of an evaluation set.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::alphabet::Symbol;
use crate::oracle::{Oracle, OracleError, Seq};
use crate::pautomac::{read_sequences_path, ParseError};
use crate::wa::WeightedAutomaton;

pub const DEFAULT_EVAL_SIZE: usize = 1000;
pub const DEFAULT_NDCG_N: usize = 5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("candidate failed: {0}")]
    Candidate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSource {
    TestFile,
    OracleSampled,
}

impl fmt::Display for EvalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSource::TestFile => "S_Test",
            EvalSource::OracleSampled => "S_RNN",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub sequences: Vec<Seq>,
    pub source: EvalSource,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// `Σ (|seq| + 1)`.
    pub fn prefix_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len() + 1).sum()
    }
}

/// Draws `n` sequences from the oracle.
pub fn sample_eval_set<O: Oracle + ?Sized>(oracle: &O, n: usize, max_len: usize, seed: u64) -> Result<EvalSet, MetricError> {
    if !oracle.capabilities().supports_next_dist {
        return Err(OracleError::Capability("next_dist").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = (0..n).map(|_| oracle.sample_sequence(&mut rng, max_len)).collect::<Result<_, _>>()?;
    Ok(EvalSet { sequences, source: EvalSource::OracleSampled })
}

/// `(S_Test, S_RNN)`: the first only when `test_file` is given.
pub fn build_eval_sets<O: Oracle + ?Sized>(
    oracle: &O,
    test_file: Option<&Path>,
    n_sequences: usize,
    max_len: usize,
    seed: u64,
) -> Result<(Option<EvalSet>, EvalSet), MetricError> {
    let test = match test_file {
        Some(path) => {
            let file = read_sequences_path(path)?;
            if file.alphabet_size != oracle.alphabet().len() {
                return Err(MetricError::InvalidInput(format!(
                    "{} declares {} symbols, oracle has {}",
                    path.display(),
                    file.alphabet_size,
                    oracle.alphabet().len()
                )));
            }
            Some(EvalSet { sequences: file.sequences, source: EvalSource::TestFile })
        }
        None => None,
    };
    Ok((test, sample_eval_set(oracle, n_sequences, max_len, seed)?))
}

/// Anything that can rank `Σ ∪ {END}` after a prefix. Only the order of the
/// scores matters; higher is better.
pub trait RankingProvider: Sync {
    /// Score vectors (END last) for every prefix of `seq`, shortest first.
    fn prefix_scores(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, MetricError>;
}

impl RankingProvider for WeightedAutomaton {
    fn prefix_scores(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, MetricError> {
        let scores = WeightedAutomaton::prefix_scores(self, seq).map_err(|e| MetricError::Candidate(e.to_string()))?;
        Ok(scores.into_iter().map(|s| s.raw).collect())
    }
}

/// Ranks by an oracle's own next-symbol distributions.
pub struct OracleRanking<'a, O: ?Sized>(pub &'a O);

impl<O: Oracle + ?Sized> RankingProvider for OracleRanking<'_, O> {
    fn prefix_scores(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, MetricError> {
        Ok(self.0.prefix_dists(seq)?)
    }
}

/// Indices sorted best first: higher score, then lower id. END is the last
/// id, so it loses every tie. NaN ranks below everything.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let key = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b)));
    idx
}

pub fn argmax(scores: &[f64]) -> usize {
    ranking(scores)[0]
}

fn dcg(ground: &[f64], order: &[usize], n: usize) -> f64 {
    order.iter().take(n).enumerate().map(|(i, &s)| ground[s] / ((i + 2) as f64).log2()).sum()
}

/// Per-prefix NDCG_n, or `None` when the ideal gain is zero.
pub fn ndcg_at(ground: &[f64], candidate: &[f64], n: usize) -> Option<f64> {
    let ideal = dcg(ground, &ranking(ground), n);
    (ideal > 0.0).then(|| dcg(ground, &ranking(candidate), n) / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ndcg(usize),
    WerD,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(n) => write!(f, "NDCG{n}"),
            Metric::WerD => f.write_str("WER-D"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub metric: Metric,
    pub value: f64,
    /// Prefixes that contributed to `value`.
    pub prefix_count: usize,
    /// Prefixes skipped because the ideal gain was zero.
    pub skipped: usize,
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.carry += (self.total - t) + x;
        } else {
            self.carry += (x - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

#[derive(Debug, Default)]
struct SeqTally {
    ndcg: Sum,
    scored: usize,
    skipped: usize,
    disagreements: usize,
    prefixes: usize,
    dump: Vec<String>,
}

fn top(order: &[usize], n: usize) -> String {
    order.iter().take(n).map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn tally_sequence<O, C>(ground: &O, candidate: &C, seq_id: usize, seq: &[Symbol], n: usize, dump: bool) -> Result<SeqTally, MetricError>
where
    O: Oracle + ?Sized,
    C: RankingProvider + ?Sized,
{
    let g = ground.prefix_dists(seq)?;
    let c = candidate.prefix_scores(seq)?;
    let width = ground.alphabet().len() + 1;
    if g.len() != seq.len() + 1 || c.len() != seq.len() + 1 || c.iter().any(|v| v.len() != width) {
        return Err(MetricError::Candidate("score vectors do not match the sequence".into()));
    }
    let mut t = SeqTally::default();
    for (len, (gd, cd)) in g.iter().zip(&c).enumerate() {
        let score = ndcg_at(gd, cd, n);
        match score {
            Some(x) => {
                t.ndcg.add(x);
                t.scored += 1;
            }
            None => t.skipped += 1,
        }
        let (g_order, c_order) = (ranking(gd), ranking(cd));
        let agree = g_order[0] == c_order[0];
        t.disagreements += usize::from(!agree);
        t.prefixes += 1;
        if dump {
            let score = score.map_or_else(|| "skip".to_string(), |x| format!("{x:.6}"));
            t.dump.push(format!(
                "{seq_id}\t{len}\t{}\t{}\t{score}\t{}",
                top(&g_order, 5),
                top(&c_order, 5),
                u8::from(agree)
            ));
        }
    }
    Ok(t)
}

/// Both metrics in one pass over the evaluation set. When `dump` is given,
/// one line per prefix is written:
/// `seq_id<TAB>prefix_len<TAB>ground_top5<TAB>cand_top5<TAB>ndcg<TAB>agree`.
pub fn evaluate<O, C>(
    ground: &O,
    candidate: &C,
    eval_set: &EvalSet,
    n: usize,
    dump: Option<&mut dyn Write>,
) -> Result<(MetricResult, MetricResult), MetricError>
where
    O: Oracle + ?Sized,
    C: RankingProvider + ?Sized,
{
    if !ground.capabilities().supports_next_dist {
        return Err(OracleError::Capability("next_dist").into());
    }
    let width = ground.alphabet().len() + 1;
    if n == 0 || n > width {
        return Err(MetricError::InvalidInput(format!("n={n} must lie in 1..={width}")));
    }
    let want_dump = dump.is_some();
    let run = |(i, seq): (usize, &Seq)| tally_sequence(ground, candidate, i, seq, n, want_dump);
    let tallies: Vec<SeqTally> = if ground.capabilities().max_concurrent_queries > 1 {
        eval_set.sequences.par_iter().enumerate().map(run).collect::<Result<_, _>>()?
    } else {
        eval_set.sequences.iter().enumerate().map(run).collect::<Result<_, _>>()?
    };

    let mut ndcg = Sum::default();
    let (mut scored, mut skipped, mut wrong, mut prefixes) = (0, 0, 0, 0);
    for t in &tallies {
        ndcg.add(t.ndcg.value());
        scored += t.scored;
        skipped += t.skipped;
        wrong += t.disagreements;
        prefixes += t.prefixes;
    }
    if let Some(out) = dump {
        for line in tallies.iter().flat_map(|t| &t.dump) {
            writeln!(out, "{line}")?;
        }
    }
    let mean = |num: f64, den: usize| if den == 0 { f64::NAN } else { num / den as f64 };
    Ok((
        MetricResult { metric: Metric::Ndcg(n), value: mean(ndcg.value(), scored), prefix_count: scored, skipped },
        MetricResult { metric: Metric::WerD, value: mean(wrong as f64, prefixes), prefix_count: prefixes, skipped: 0 },
    ))
}

pub fn ndcg_n<O, C>(ground: &O, candidate: &C, eval_set: &EvalSet, n: usize) -> Result<MetricResult, MetricError>
where
    O: Oracle + ?Sized,
    C: RankingProvider + ?Sized,
{
    Ok(evaluate(ground, candidate, eval_set, n, None)?.0)
}

pub fn wer_d<O, C>(ground: &O, candidate: &C, eval_set: &EvalSet) -> Result<MetricResult, MetricError>
where
    O: Oracle + ?Sized,
    C: RankingProvider + ?Sized,
{
    Ok(evaluate(ground, candidate, eval_set, 1, None)?.1)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::alphabet::Alphabet;
    use crate::oracle::{Capabilities, WaOracle};
    use crate::wa::fixtures::{chain_ab, two_state};
    use crate::wa::{random_pfa, PfaParams};

    /// Brute-force NDCG: enumerate the candidate's order explicitly.
    fn ndcg_reference(ground: &[f64], cand_order: &[usize], n: usize) -> f64 {
        let mut ideal: Vec<f64> = ground.to_vec();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..=n {
            let disc = ((k + 1) as f64).ln() / 2f64.ln();
            num += ground[cand_order[k - 1]] / disc;
            den += ideal[k - 1] / disc;
        }
        num / den
    }

    #[test]
    fn hand_ndcg_example() {
        let ground = [0.5, 0.3, 0.2];
        let worst_first = [0.0, 1.0, 2.0];
        let got = ndcg_at(&ground, &worst_first, 2).unwrap();
        assert!((got - ndcg_reference(&ground, &[2, 1, 0], 2)).abs() < 1e-15);
        assert!((got - 0.38928 / 0.68928).abs() < 1e-5);
        assert!((got - 0.564763).abs() < 1e-6);
    }

    #[test]
    fn ranking_ties() {
        assert_eq!(ranking(&[0.2, 0.5, 0.5]), vec![1, 2, 0]);
        assert_eq!(argmax(&[0.3, 0.1, 0.3]), 0);
        assert_eq!(argmax(&[f64::NAN, 0.0, -1.0]), 1);
        assert_eq!(ndcg_at(&[0.0, 0.0], &[1.0, 0.0], 2), None);
    }

    /// Fixed per-prefix distributions keyed by prefix length.
    struct Table {
        alphabet: Alphabet,
        rows: Vec<Vec<f64>>,
    }

    impl Oracle for Table {
        fn alphabet(&self) -> &Alphabet {
            &self.alphabet
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities { supports_next_dist: true, max_concurrent_queries: 1 }
        }
        fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
            seqs.iter().map(|_| Err(OracleError::Capability("logprob"))).collect()
        }
        fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
            prefixes.iter().map(|p| Ok(self.rows[p.len()].clone())).collect()
        }
    }

    #[test]
    fn wer_d_hand_example() {
        let alphabet = Alphabet::new(["a", "b"]).unwrap();
        let ground = Table { alphabet: alphabet.clone(), rows: vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.1, 0.7]] };
        let cand = Table { alphabet, rows: vec![vec![0.5, 0.4, 0.1], vec![0.5, 0.4, 0.1]] };
        let set = EvalSet { sequences: vec![vec![0]], source: EvalSource::TestFile };
        let r = wer_d(&ground, &OracleRanking(&cand), &set).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.prefix_count, 2);
    }

    #[test]
    fn self_consistency_and_dump() {
        let oracle = WaOracle::new(two_state());
        let set = sample_eval_set(&oracle, 50, 100, 3).unwrap();
        let mut dump = Vec::new();
        let (ndcg, wer) = evaluate(&oracle, oracle.automaton(), &set, 3, Some(&mut dump)).unwrap();
        assert!((ndcg.value - 1.0).abs() < 1e-12);
        assert_eq!(wer.value, 0.0);
        assert_eq!(wer.prefix_count, set.prefix_count());
        let text = String::from_utf8(dump).unwrap();
        assert_eq!(text.lines().count(), set.prefix_count());
        assert!(text.lines().next().unwrap().starts_with("0\t0\t0,1,2\t0,1,2\t1.000000\t1"));
    }

    #[test]
    fn eval_sets() {
        let oracle = WaOracle::new(chain_ab());
        let set = sample_eval_set(&oracle, 3, 100, 0).unwrap();
        assert_eq!(set.sequences, vec![vec![0, 1]; 3]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.txt");
        std::fs::write(&path, "2 2\n1 0\n2 0 1\n").unwrap();
        let (test, rnn) = build_eval_sets(&oracle, Some(&path), 3, 100, 0).unwrap();
        let test = test.unwrap();
        assert_eq!((test.len(), test.source), (2, EvalSource::TestFile));
        assert_eq!(rnn.source, EvalSource::OracleSampled);
        assert!(matches!(
            build_eval_sets(&oracle, Some(&dir.path().join("missing")), 3, 100, 0),
            Err(MetricError::Parse(_))
        ));
        let oracle = WaOracle::new(two_state());
        assert_eq!(sample_eval_set(&oracle, 20, 50, 9).unwrap(), sample_eval_set(&oracle, 20, 50, 9).unwrap());
    }

    #[test]
    fn independent_candidate_disagrees() {
        let ground = WaOracle::new(random_pfa(PfaParams::new(4, 3), 1).unwrap());
        let other = random_pfa(PfaParams::new(4, 3), 2).unwrap();
        let set = sample_eval_set(&ground, 100, 100, 5).unwrap();
        let (ndcg, wer) = evaluate(&ground, &other, &set, 4, None).unwrap();
        assert!(wer.value > 0.0 && wer.value <= 1.0);
        assert!(ndcg.value > 0.0 && ndcg.value < 1.0);
    }

    proptest! {
        #[test]
        fn ndcg_matches_reference(g in proptest::collection::vec(0.0f64..1.0, 5), c in proptest::collection::vec(-1.0f64..1.0, 5), n in 1usize..=5) {
            prop_assume!(g.iter().sum::<f64>() > 0.0);
            let got = ndcg_at(&g, &c, n).unwrap();
            prop_assert!((got - ndcg_reference(&g, &ranking(&c), n)).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn argmax_invariant_under_monotone_maps(c in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let mapped: Vec<f64> = c.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(argmax(&c), argmax(&mapped));
        }

        #[test]
        fn ndcg_ignores_reorders_among_equal_ground(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
            let g = [0.4, 0.2, 0.2, 0.2];
            let mut c = [4.0, 0.0, 0.0, 0.0];
            for (slot, &p) in [1usize, 2, 3].iter().zip(perm.iter().filter(|&&p| p != 0)) {
                c[*slot] = p as f64;
            }
            prop_assert!((ndcg_at(&g, &c, 3).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
