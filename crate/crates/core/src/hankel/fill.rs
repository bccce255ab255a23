use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::{Basis, HankelError};
use crate::oracle::cache::{format_record, read_spill};
use crate::oracle::{Oracle, OracleError, Seq};

/// Largest supported `p` or `s` for dense storage.
pub const MAX_BLOCK_DIM: usize = 3000;
/// Answered queries between checkpoint flushes.
pub const CHECKPOINT_EVERY: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueSpace {
    Probability,
    LogProbability,
}

/// `H(u,v) = f(uv)`, `H_σ(u,v) = f(uσv)`, `h_{P,λ}(u) = f(u)`, `h_{λ,S}(v) = f(v)`.
#[derive(Debug, Clone)]
pub struct HankelBlocks {
    pub h: DMatrix<f64>,
    pub h_sigma: Vec<DMatrix<f64>>,
    pub h_p_lambda: DVector<f64>,
    pub h_lambda_s: DVector<f64>,
    pub value_space: ValueSpace,
    /// Distinct strings the oracle had to answer.
    pub unique_queries: usize,
}

impl HankelBlocks {
    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    pub fn s(&self) -> usize {
        self.h.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct FillOptions {
    /// Queries per dispatched batch.
    pub chunk_size: usize,
    /// Extra attempts for queries failing with a retryable error.
    pub retries: usize,
    pub retry_delay: Duration,
    /// Spill file of answered queries; read on start, appended while filling.
    pub checkpoint: Option<PathBuf>,
}

impl Default for FillOptions {
    fn default() -> Self {
        Self { chunk_size: 10_000, retries: 3, retry_delay: Duration::from_millis(50), checkpoint: None }
    }
}

pub fn fill_hankel<O: Oracle + ?Sized>(oracle: &O, basis: &Basis) -> Result<HankelBlocks, HankelError> {
    fill_hankel_with(oracle, basis, &FillOptions::default())
}

/// Maps every cell of every block to a distinct concatenated string.
struct QueryIndex {
    unique: Vec<Seq>,
    /// Block-major: block 0 is `H`, block `1+σ` is `H_σ`; row-major inside.
    cells: Vec<u32>,
}

fn index_queries(basis: &Basis) -> QueryIndex {
    let (p, s, k) = (basis.p(), basis.s(), basis.alphabet_size());
    let mut slot: FxHashMap<Seq, u32> = FxHashMap::default();
    let mut cells = Vec::with_capacity(p * s * (k + 1));
    let mut buf: Seq = Vec::new();
    for block in 0..=k {
        for u in basis.prefixes() {
            for v in basis.suffixes() {
                buf.clear();
                buf.extend_from_slice(u);
                if block > 0 {
                    buf.push(block - 1);
                }
                buf.extend_from_slice(v);
                let id = match slot.get(buf.as_slice()) {
                    Some(&id) => id,
                    None => {
                        let id = slot.len() as u32;
                        slot.insert(buf.clone(), id);
                        id
                    }
                };
                cells.push(id);
            }
        }
    }
    let mut unique = vec![Seq::new(); slot.len()];
    for (w, id) in slot {
        unique[id as usize] = w;
    }
    QueryIndex { unique, cells }
}

fn query_with_retries<O: Oracle + ?Sized>(oracle: &O, batch: &[Seq], opts: &FillOptions) -> Vec<Result<f64, OracleError>> {
    let mut out = oracle.logprob_batch(batch);
    for attempt in 0..opts.retries {
        let failed: Vec<usize> =
            (0..batch.len()).filter(|&i| matches!(&out[i], Err(e) if e.is_retryable())).collect();
        if failed.is_empty() {
            break;
        }
        std::thread::sleep(opts.retry_delay * (attempt as u32 + 1));
        let again: Vec<Seq> = failed.iter().map(|&i| batch[i].clone()).collect();
        for (i, r) in failed.into_iter().zip(oracle.logprob_batch(&again)) {
            out[i] = r;
        }
    }
    out
}

struct Checkpoint {
    path: PathBuf,
    writer: BufWriter<std::fs::File>,
    pending: usize,
}

impl Checkpoint {
    fn record(&mut self, seq: &[usize], lp: f64) -> std::io::Result<()> {
        writeln!(self.writer, "{}", format_record(seq, lp))?;
        self.pending += 1;
        if self.pending >= CHECKPOINT_EVERY {
            self.writer.flush()?;
            self.pending = 0;
        }
        Ok(())
    }
}

/// Fills all blocks for `basis`. Distinct concatenations are queried once,
/// in lexicographic order, in batches of `opts.chunk_size` with up to
/// `max_concurrent_queries` batches in flight. Answers are stored as
/// probabilities (`-inf` becomes 0).
pub fn fill_hankel_with<O: Oracle + ?Sized>(oracle: &O, basis: &Basis, opts: &FillOptions) -> Result<HankelBlocks, HankelError> {
    let k = oracle.alphabet().len();
    if basis.alphabet_size() != k {
        return Err(HankelError::InvalidInput(format!(
            "basis alphabet has {} symbols, oracle has {k}",
            basis.alphabet_size()
        )));
    }
    let (p, s) = (basis.p(), basis.s());
    if p > MAX_BLOCK_DIM || s > MAX_BLOCK_DIM {
        return Err(HankelError::FillAborted {
            answered: 0,
            total: 0,
            reason: format!("basis {p}x{s} exceeds the dense limit {MAX_BLOCK_DIM}; fill in chunks"),
            checkpoint: None,
        });
    }

    let index = index_queries(basis);
    let total = index.unique.len();
    let mut answers: Vec<Option<f64>> = vec![None; total];

    let mut checkpoint = match &opts.checkpoint {
        Some(path) => {
            if path.exists() {
                let lookup: HashMap<&[usize], usize> =
                    index.unique.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
                for (seq, lp) in read_spill(path)? {
                    if let Some(&i) = lookup.get(seq.as_slice()) {
                        answers[i] = Some(lp);
                    }
                }
            }
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            Some(Checkpoint { path: path.clone(), writer: BufWriter::new(file), pending: 0 })
        }
        None => None,
    };

    let mut pending: Vec<usize> = (0..total).filter(|&i| answers[i].is_none()).collect();
    pending.sort_unstable_by(|&a, &b| index.unique[a].cmp(&index.unique[b]));
    let chunk_size = opts.chunk_size.max(1);
    let in_flight = oracle.capabilities().max_concurrent_queries.clamp(1, rayon::current_num_threads().max(1));

    let mut failure: Option<OracleError> = None;
    for wave in pending.chunks(chunk_size * in_flight) {
        let batches: Vec<Vec<Seq>> =
            wave.chunks(chunk_size).map(|c| c.iter().map(|&i| index.unique[i].clone()).collect()).collect();
        let results: Vec<Vec<Result<f64, OracleError>>> = if batches.len() == 1 {
            vec![query_with_retries(oracle, &batches[0], opts)]
        } else {
            batches.par_iter().map(|b| query_with_retries(oracle, b, opts)).collect()
        };
        for (&i, r) in wave.iter().zip(results.into_iter().flatten()) {
            match r {
                Ok(lp) if lp.is_nan() => {
                    failure.get_or_insert(OracleError::CorruptAnswer(format!("NaN for {:?}", index.unique[i])));
                }
                Ok(lp) => {
                    answers[i] = Some(lp);
                    if let Some(cp) = checkpoint.as_mut() {
                        cp.record(&index.unique[i], lp)?;
                    }
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if failure.is_some() {
            break;
        }
    }
    if let Some(cp) = checkpoint.as_mut() {
        cp.writer.flush()?;
    }
    if let Some(err) = failure {
        return Err(HankelError::FillAborted {
            answered: answers.iter().filter(|a| a.is_some()).count(),
            total,
            reason: err.to_string(),
            checkpoint: checkpoint.map(|cp| cp.path),
        });
    }

    let values: Vec<f64> = answers
        .into_iter()
        .map(|a| {
            let lp = a.expect("every query answered");
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                lp.exp()
            }
        })
        .collect();
    let block = |b: usize| DMatrix::from_fn(p, s, |i, j| values[index.cells[(b * p + i) * s + j] as usize]);
    let h = block(0);
    let h_sigma = (1..=k).map(block).collect();
    // λ is first in both canonical orders.
    let h_p_lambda = h.column(0).into_owned();
    let h_lambda_s = h.row(0).transpose();
    Ok(HankelBlocks { h, h_sigma, h_p_lambda, h_lambda_s, value_space: ValueSpace::Probability, unique_queries: total })
}
