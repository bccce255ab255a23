//! Distillation and sweep pipelines, independent of argument parsing.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wadistill::hankel::{fill_hankel_with, gen_basis, FillOptions, Strategy};
use wadistill::metrics::{build_eval_sets, evaluate, EvalSet, Metric, MetricResult};
use wadistill::spectral::{detect_hankel_rank, wa_parameter_count, Extractor, FullSvd};
use wadistill::{Basis, HankelBlocks, Oracle, RankingProvider, SpectrumReport, WeightedAutomaton};

use crate::config::{MetricKind, SweepConfig};
use crate::error::CliError;
use crate::report::{ReportWriter, Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisParams {
    pub strategy: Strategy,
    pub p: usize,
    pub s: usize,
    pub max_len: usize,
    pub seed: u64,
}

/// Filled blocks with their spectrum.
pub struct Analysis {
    pub basis: Basis,
    pub blocks: HankelBlocks,
    pub svd: FullSvd,
    pub spectrum: SpectrumReport,
}

pub fn make_basis(oracle: &dyn Oracle, params: &BasisParams) -> Result<Basis, CliError> {
    if params.p == 0 || params.s == 0 {
        return Err(CliError::Usage("p and s must be positive".into()));
    }
    Ok(gen_basis(oracle, params.strategy, params.p, params.s, params.max_len, params.seed)?)
}

pub fn analyze(oracle: &dyn Oracle, basis: Basis, threshold_decades: f64, fill: &FillOptions) -> Result<Analysis, CliError> {
    let blocks = fill_hankel_with(oracle, &basis, fill)?;
    let svd = FullSvd::compute(&blocks.h)?;
    let spectrum = detect_hankel_rank(svd.singular_values(), threshold_decades)?;
    Ok(Analysis { basis, blocks, svd, spectrum })
}

/// Rejects ranks outside `1..=min(p,s)`.
pub fn check_rank(rank: usize, p: usize, s: usize) -> Result<(), CliError> {
    if rank == 0 || rank > p.min(s) {
        return Err(CliError::Usage(format!("rank {rank} must lie in 1..={} = min(p, s)", p.min(s))));
    }
    Ok(())
}

/// Extracts at `rank`, or at the detected Hankel rank when `None`.
pub fn distill(analysis: &Analysis, rank: Option<usize>, oracle: &dyn Oracle) -> Result<(usize, WeightedAutomaton), CliError> {
    let r = rank.unwrap_or(analysis.spectrum.hankel_rank);
    check_rank(r, analysis.basis.p(), analysis.basis.s())?;
    let wa = Extractor::new(&analysis.blocks, &analysis.svd, r, oracle.alphabet().clone())?.extract(r)?;
    Ok((r, wa))
}

/// Evaluation sets for a sweep or an eval command: S_Test first when present.
pub fn eval_sets(
    oracle: &dyn Oracle,
    test_file: Option<&std::path::Path>,
    eval_size: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<EvalSet>, CliError> {
    let (test, sampled) = build_eval_sets(oracle, test_file, eval_size, max_len, seed)?;
    Ok(test.into_iter().chain((!sampled.is_empty()).then_some(sampled)).collect())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Scores `candidate` on every set; one `(set tag, ndcg, wer)` per set.
/// `ndcg_n` above `|Σ|+1` is clamped, which leaves the value unchanged since
/// the ranking has only `|Σ|+1` entries; the row label keeps the requested n.
pub fn score(
    oracle: &dyn Oracle,
    candidate: &dyn RankingProvider,
    sets: &[EvalSet],
    ndcg_n: usize,
) -> Result<Vec<(String, MetricResult, MetricResult)>, CliError> {
    sets.iter()
        .map(|set| {
            let (mut ndcg, wer) = evaluate(oracle, candidate, set, ndcg_n.min(oracle.alphabet().len() + 1), None)?;
            ndcg.metric = Metric::Ndcg(ndcg_n);
            Ok((set.source.to_string(), ndcg, wer))
        })
        .collect()
}

struct ConfigKey<'a> {
    cfg: &'a SweepConfig,
    strategy: Strategy,
    p: usize,
    s: usize,
}

impl ConfigKey<'_> {
    fn row(&self, rank: usize, metric: String, eval_set: &str) -> Row {
        Row {
            problem: self.cfg.problem.clone(),
            strategy: self.strategy.to_string(),
            p: self.p,
            s: self.s,
            rank,
            metric,
            eval_set: eval_set.to_string(),
            value: None,
            hankel_rank: None,
            wa_params: None,
            wall_ms: 0,
            status: "ok".into(),
        }
    }
}

fn metric_name(kind: MetricKind, ndcg_n: usize) -> String {
    match kind {
        MetricKind::Ndcg => format!("NDCG{ndcg_n}"),
        MetricKind::WerD => "WER-D".into(),
    }
}

fn higher_is_better(kind: MetricKind) -> bool {
    kind == MetricKind::Ndcg
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Rows for one `(strategy, p, s)` configuration: one per rank, metric and
/// evaluation set, then `best_*` and `delta_*` summary rows.
fn sweep_config(key: &ConfigKey<'_>, oracle: &dyn Oracle, sets: &[EvalSet], fill: &FillOptions) -> Vec<Row> {
    let cfg = key.cfg;
    let start = Instant::now();
    let tags: Vec<String> = sets.iter().map(|s| s.source.to_string()).collect();
    let error_rows = |rank: usize, hankel_rank: Option<usize>, err: &CliError, wall_ms: u64| -> Vec<Row> {
        eprintln!("{} {} p={} s={} rank={rank}: {err}", cfg.problem, key.strategy, key.p, key.s);
        let mut rows = Vec::new();
        for tag in &tags {
            for &m in &cfg.metrics {
                rows.push(Row {
                    hankel_rank,
                    wall_ms,
                    status: err.family().to_string(),
                    ..key.row(rank, metric_name(m, cfg.ndcg_n), tag)
                });
            }
        }
        rows
    };

    let params = BasisParams { strategy: key.strategy, p: key.p, s: key.s, max_len: cfg.max_len, seed: cfg.seed_basis };
    let prepared = make_basis(oracle, &params).and_then(|basis| analyze(oracle, basis, cfg.threshold_decades, fill));
    let analysis = match prepared {
        Ok(a) => a,
        Err(e) => return error_rows(0, None, &e, elapsed_ms(start)),
    };
    let hankel_rank = analysis.spectrum.hankel_rank;
    let mut ranks = cfg.ranks.ranks(analysis.svd.max_rank());
    if !ranks.contains(&hankel_rank) {
        ranks.push(hankel_rank);
        ranks.sort_unstable();
    }
    let top = *ranks.last().expect("hankel rank is always present");
    let extractor = match Extractor::new(&analysis.blocks, &analysis.svd, top, oracle.alphabet().clone()) {
        Ok(x) => x,
        Err(e) => return error_rows(0, Some(hankel_rank), &e.into(), elapsed_ms(start)),
    };
    let prep_ms = elapsed_ms(start);
    let k = oracle.alphabet().len();

    let mut rows = Vec::new();
    for &r in &ranks {
        let t = Instant::now();
        let scored = extractor.extract(r).map_err(CliError::from).and_then(|wa| score(oracle, &wa, sets, cfg.ndcg_n));
        let wall_ms = prep_ms + elapsed_ms(t);
        match scored {
            Err(e) => rows.extend(error_rows(r, Some(hankel_rank), &e, wall_ms)),
            Ok(results) => {
                for (tag, ndcg, wer) in results {
                    for &m in &cfg.metrics {
                        let value = finite(if m == MetricKind::Ndcg { ndcg.value } else { wer.value });
                        rows.push(Row {
                            value,
                            hankel_rank: Some(hankel_rank),
                            wa_params: Some(wa_parameter_count(r, k)),
                            wall_ms,
                            status: if value.is_some() { "ok".into() } else { "undefined".into() },
                            ..key.row(r, metric_name(m, cfg.ndcg_n), &tag)
                        });
                    }
                }
            }
        }
    }

    let mut summary = Vec::new();
    for tag in &tags {
        for &m in &cfg.metrics {
            let name = metric_name(m, cfg.ndcg_n);
            let series: Vec<(usize, f64)> = rows
                .iter()
                .filter(|row| row.metric == name && &row.eval_set == tag)
                .filter_map(|row| row.value.map(|v| (row.rank, v)))
                .collect();
            let better = |a: f64, b: f64| if higher_is_better(m) { a > b } else { a < b };
            let Some(best) = series.iter().copied().reduce(|acc, x| if better(x.1, acc.1) { x } else { acc }) else {
                continue;
            };
            let base = Row { hankel_rank: Some(hankel_rank), wall_ms: elapsed_ms(start), ..key.row(best.0, String::new(), tag) };
            summary.push(Row {
                metric: format!("best_{name}"),
                value: Some(best.1),
                wa_params: Some(wa_parameter_count(best.0, k)),
                ..base.clone()
            });
            let at = series.iter().find(|(r, _)| *r == hankel_rank).map(|&(_, v)| v);
            summary.push(Row {
                rank: hankel_rank,
                metric: format!("delta_{name}"),
                value: at.map(|v| (best.1 - v).abs()),
                wa_params: Some(wa_parameter_count(hankel_rank, k)),
                status: if at.is_some() { "ok".into() } else { "undefined".into() },
                ..base
            });
        }
    }
    rows.extend(summary);
    rows
}

/// `(strategy, p, s)` triples already finished in an earlier run.
fn completed(existing: &[Row], problem: &str) -> HashSet<(String, usize, usize)> {
    existing
        .iter()
        .filter(|r| r.problem == problem && (r.metric.starts_with("delta_") || (r.rank == 0 && r.status != "ok")))
        .map(|r| (r.strategy.clone(), r.p, r.s))
        .collect()
}

/// Runs every configuration not already completed in the report and
/// returns the rows written by this call.
pub fn run_sweep(cfg: &SweepConfig, oracle: &dyn Oracle, fill: &FillOptions) -> Result<Vec<Row>, CliError> {
    let existing = if cfg.report.exists() { crate::report::read_report(&cfg.report).unwrap_or_default() } else { Vec::new() };
    let done = completed(&existing, &cfg.problem);
    let writer = Mutex::new(ReportWriter::open(&cfg.report)?);
    let sets = eval_sets(oracle, cfg.test_file.as_deref(), cfg.eval_size, cfg.max_len, cfg.seed_eval)?;

    let keys: Vec<ConfigKey<'_>> = cfg
        .strategies
        .iter()
        .flat_map(|&strategy| cfg.sizes.iter().map(move |&(p, s)| ConfigKey { cfg, strategy, p, s }))
        .filter(|k| !done.contains(&(k.strategy.to_string(), k.p, k.s)))
        .collect();

    let written = Mutex::new(Vec::new());
    let run_one = |key: &ConfigKey<'_>| -> Result<(), CliError> {
        let rows = sweep_config(key, oracle, &sets, fill);
        let mut w = writer.lock().expect("report writer poisoned");
        for row in &rows {
            w.append(row)?;
        }
        written.lock().expect("row list poisoned").extend(rows);
        Ok(())
    };
    if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        pool.install(|| keys.par_iter().try_for_each(run_one))?;
    } else {
        keys.iter().try_for_each(run_one)?;
    }
    Ok(written.into_inner().expect("row list poisoned"))
}
