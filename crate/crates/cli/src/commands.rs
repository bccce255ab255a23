//! Subcommand definitions and handlers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wadistill::hankel::{read_basis, write_basis, FillOptions, Strategy, DEFAULT_MAX_LEN};
use wadistill::metrics::{evaluate, Metric, OracleRanking, DEFAULT_EVAL_SIZE, DEFAULT_NDCG_N};
use wadistill::ngram::{sample_corpus, train_ngram, DEFAULT_BUDGET};
use wadistill::pautomac::{read_sequences_path, write_sequences};
use wadistill::spectral::{wa_parameter_count, write_spectrum, DEFAULT_DROP_DECADES};
use wadistill::wa::{random_pfa, PfaParams};
use wadistill::{NGramModel, Oracle, RankingProvider, WeightedAutomaton};

use crate::config::{default_problem, ConfigFile, RanksField, SweepConfig};
use crate::error::{io_at, CliError};
use crate::manifest::{file_sha256, sha256_hex, BasisSource, Manifest, OracleRecord, OutputRecord, PIPELINE};
use crate::oracle_spec::{open_oracle, OpenedOracle, OracleOptions, OracleSpec};
use crate::pipeline::{analyze, check_rank, distill, eval_sets, make_basis, run_sweep, Analysis, BasisParams};
use crate::report::{ReportWriter, Row, HEADER};

#[derive(Debug, Parser)]
#[command(name = "wadistill", version, about = "Distill weighted automata from black-box sequence oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a weighted automaton from an oracle.
    Distill(DistillArgs),
    /// Score a candidate model against an oracle.
    Eval(EvalArgs),
    /// Run a grid of basis sizes and ranks, appending to a report.
    Sweep(SweepArgs),
    /// Write the singular values of a filled Hankel block.
    Spectrum(SpectrumArgs),
    /// Sample sequences from an oracle into a sequence file.
    Sample(SampleArgs),
    /// n-gram baseline.
    #[command(subcommand)]
    Ngram(NgramCommand),
    /// Random probabilistic automata.
    #[command(subcommand)]
    Pfa(PfaCommand),
    /// Rerun a distill or spectrum command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// wa:<file> | ngram:<file> | exec:<cmd> | tcp:<host:port>
    #[arg(long)]
    pub oracle: OracleSpec,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    /// Multiplicative noise level applied to every answer.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Spill file caching answered string queries across runs.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl OracleArgs {
    fn options(&self) -> OracleOptions {
        OracleOptions {
            timeout: Duration::from_secs(self.timeout_secs),
            noise: self.noise.map(|l| (l, self.noise_seed)),
            cache_file: self.cache.clone(),
        }
    }

    fn open(&self) -> Result<OpenedOracle, CliError> {
        open_oracle(&self.oracle, &self.options())
    }
}

#[derive(Debug, Clone, Args)]
pub struct BasisArgs {
    #[arg(long, default_value_t = Strategy::Oracle)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 100)]
    pub s: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed_basis: u64,
    /// Use this basis file instead of generating one.
    #[arg(long)]
    pub basis_in: Option<PathBuf>,
    #[arg(long)]
    pub basis_out: Option<PathBuf>,
    /// Spill file of answered fill queries, reused on resume.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DROP_DECADES)]
    pub threshold_decades: f64,
}

impl BasisArgs {
    fn params(&self) -> BasisParams {
        BasisParams { strategy: self.strategy, p: self.p, s: self.s, max_len: self.max_len, seed: self.seed_basis }
    }

    fn fill_options(&self) -> FillOptions {
        FillOptions { checkpoint: self.checkpoint.clone(), ..FillOptions::default() }
    }
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Extraction rank; defaults to the detected Hankel rank.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub wa_out: PathBuf,
    /// Defaults to `<wa-out>.spectrum.tsv`.
    #[arg(long)]
    pub spectrum_out: Option<PathBuf>,
    /// Defaults to `<wa-out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalSetArgs {
    /// Sequence file used as S_Test.
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Number of oracle-sampled sequences in S_RNN (0 disables it).
    #[arg(long, default_value_t = DEFAULT_EVAL_SIZE)]
    pub eval_size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed_eval: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = DEFAULT_NDCG_N)]
    pub ndcg_n: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// wa:<file> | ngram:<file> | exec:<cmd> | tcp:<host:port>
    #[arg(long)]
    pub candidate: OracleSpec,
    #[command(flatten)]
    pub sets: EvalSetArgs,
    /// Append rows here instead of printing them.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// Per-prefix debug lines.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    /// `spice`, `pautomac` or a comma-separated list.
    #[arg(long)]
    pub rank: Option<String>,
    /// Comma-separated: uniform, oracle.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub seed_basis: Option<u64>,
    #[arg(long)]
    pub seed_eval: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub threshold_decades: Option<f64>,
    /// Comma-separated: ndcg, wer-d.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    #[arg(long)]
    pub ndcg_n: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long, default_value_t = DEFAULT_EVAL_SIZE)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub seed_eval: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum NgramCommand {
    /// Train on a sequence file or on sequences sampled from an oracle.
    Train(NgramTrainArgs),
    /// Score an n-gram model against an oracle.
    Eval(NgramEvalArgs),
}

#[derive(Debug, Args)]
pub struct NgramTrainArgs {
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub oracle: Option<OracleSpec>,
    /// Training sequence file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    /// Symbols to sample from the oracle.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NgramEvalArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub sets: EvalSetArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PfaCommand {
    /// Write a random stochastic automaton as a WA document.
    Gen(PfaGenArgs),
}

#[derive(Debug, Args)]
pub struct PfaGenArgs {
    #[arg(long)]
    pub states: usize,
    #[arg(long)]
    pub alphabet: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub symbol_sparsity: f64,
    #[arg(long, default_value_t = 1.0)]
    pub transition_sparsity: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving the regenerated outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Distill(a) => cmd_distill(&a).map(drop),
        Command::Spectrum(a) => cmd_spectrum(&a).map(drop),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a).map(drop),
        Command::Sample(a) => cmd_sample(&a),
        Command::Ngram(NgramCommand::Train(a)) => cmd_ngram_train(&a),
        Command::Ngram(NgramCommand::Eval(a)) => cmd_ngram_eval(&a),
        Command::Pfa(PfaCommand::Gen(a)) => cmd_pfa_gen(&a),
        Command::Replay(a) => cmd_replay(&a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_at(path))?))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<OutputRecord, CliError> {
    std::fs::write(path, bytes).map_err(io_at(path))?;
    Ok(OutputRecord { path: path.to_path_buf(), sha256: sha256_hex(bytes) })
}

/// Builds or loads the basis, fills it and computes the spectrum.
fn prepare(opened: &OpenedOracle, basis: &BasisArgs, rank: Option<usize>) -> Result<(Analysis, BasisSource), CliError> {
    if basis.threshold_decades.is_nan() || basis.threshold_decades < 0.0 {
        return Err(CliError::Usage("threshold-decades must be a nonnegative number".into()));
    }
    let oracle = opened.oracle.as_ref();
    let (b, source) = match &basis.basis_in {
        Some(path) => {
            let file = File::open(path).map_err(io_at(path))?;
            let b = read_basis(BufReader::new(file))?;
            if b.alphabet_size() != oracle.alphabet().len() {
                return Err(CliError::Usage(format!(
                    "basis alphabet size {} differs from the oracle's {}",
                    b.alphabet_size(),
                    oracle.alphabet().len()
                )));
            }
            (b, BasisSource::File { path: path.clone(), sha256: file_sha256(path)? })
        }
        None => {
            if let Some(r) = rank {
                check_rank(r, basis.p, basis.s)?;
            }
            (make_basis(oracle, &basis.params())?, BasisSource::Generated(basis.params()))
        }
    };
    if let Some(r) = rank {
        check_rank(r, b.p(), b.s())?;
    }
    if let Some(path) = &basis.basis_out {
        let mut out = create(path)?;
        write_basis(&b, &mut out).and_then(|_| out.flush()).map_err(io_at(path))?;
    }
    let analysis = analyze(oracle, b, basis.threshold_decades, &basis.fill_options())?;
    eprintln!(
        "basis {}x{}, {} oracle queries, hankel rank {}",
        analysis.basis.p(),
        analysis.basis.s(),
        analysis.blocks.unique_queries,
        analysis.spectrum.hankel_rank
    );
    Ok((analysis, source))
}

fn oracle_record(args: &OracleArgs, opened: &OpenedOracle) -> OracleRecord {
    OracleRecord {
        spec: args.oracle.to_string(),
        identity: opened.identity.clone(),
        sha256: opened.hash.clone(),
        noise: args.noise.map(|l| (l, args.noise_seed)),
    }
}

fn spectrum_bytes(analysis: &Analysis) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_spectrum(&analysis.spectrum, &mut bytes).expect("writing to memory");
    bytes
}

pub fn cmd_distill(a: &DistillArgs) -> Result<Manifest, CliError> {
    if let Some(r) = a.rank {
        if a.basis.basis_in.is_none() {
            check_rank(r, a.basis.p, a.basis.s)?;
        }
    }
    let opened = a.oracle.open()?;
    let (analysis, source) = prepare(&opened, &a.basis, a.rank)?;
    let (r, wa) = distill(&analysis, a.rank, opened.oracle.as_ref())?;
    let spectrum_path = a.spectrum_out.clone().unwrap_or_else(|| with_suffix(&a.wa_out, ".spectrum.tsv"));
    let manifest_path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.wa_out, ".manifest.json"));
    let mut outputs = std::collections::BTreeMap::new();
    outputs.insert("wa".to_string(), write_file(&a.wa_out, wa.to_document().as_bytes())?);
    outputs.insert("spectrum".to_string(), write_file(&spectrum_path, &spectrum_bytes(&analysis))?);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "distill".into(),
        pipeline: PIPELINE.iter().map(|s| s.to_string()).collect(),
        oracle: oracle_record(&a.oracle, &opened),
        basis: source,
        p: analysis.basis.p(),
        s: analysis.basis.s(),
        unique_queries: analysis.blocks.unique_queries,
        threshold_decades: a.basis.threshold_decades,
        hankel_rank: analysis.spectrum.hankel_rank,
        rank: a.rank,
        extracted_rank: Some(r),
        outputs,
    };
    manifest.write(&manifest_path)?;
    eprintln!("wrote rank-{r} automaton to {}", a.wa_out.display());
    Ok(manifest)
}

pub fn cmd_spectrum(a: &SpectrumArgs) -> Result<Manifest, CliError> {
    let opened = a.oracle.open()?;
    let (analysis, source) = prepare(&opened, &a.basis, None)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    let mut outputs = std::collections::BTreeMap::new();
    outputs.insert("spectrum".to_string(), write_file(&a.out, &spectrum_bytes(&analysis))?);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "spectrum".into(),
        pipeline: PIPELINE[..2].iter().map(|s| s.to_string()).collect(),
        oracle: oracle_record(&a.oracle, &opened),
        basis: source,
        p: analysis.basis.p(),
        s: analysis.basis.s(),
        unique_queries: analysis.blocks.unique_queries,
        threshold_decades: a.basis.threshold_decades,
        hankel_rank: analysis.spectrum.hankel_rank,
        rank: None,
        extracted_rank: None,
        outputs,
    };
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let m = Manifest::read(&a.manifest)?;
    std::fs::create_dir_all(&a.out_dir).map_err(io_at(&a.out_dir))?;
    let spec: OracleSpec = m.oracle.spec.parse().map_err(CliError::Parse)?;
    let (level, seed) = m.oracle.noise.map_or((None, 0), |(l, s)| (Some(l), s));
    let oracle = OracleArgs { oracle: spec, timeout_secs: 30, noise: level, noise_seed: seed, cache: None };
    let target = |key: &str| -> Result<PathBuf, CliError> {
        let rec = m.outputs.get(key).ok_or_else(|| CliError::Parse(format!("manifest lists no {key} output")))?;
        let name = rec.path.file_name().ok_or_else(|| CliError::Parse(format!("bad {key} path in manifest")))?;
        Ok(a.out_dir.join(name))
    };
    let basis = match &m.basis {
        BasisSource::Generated(p) => BasisArgs {
            strategy: p.strategy,
            p: p.p,
            s: p.s,
            max_len: p.max_len,
            seed_basis: p.seed,
            basis_in: None,
            basis_out: None,
            checkpoint: None,
            threshold_decades: m.threshold_decades,
        },
        BasisSource::File { path, sha256 } => {
            if &file_sha256(path)? != sha256 {
                return Err(CliError::Usage(format!("basis file {} changed since the manifest was written", path.display())));
            }
            BasisArgs {
                strategy: Strategy::Explicit,
                p: m.p,
                s: m.s,
                max_len: 0,
                seed_basis: 0,
                basis_in: Some(path.clone()),
                basis_out: None,
                checkpoint: None,
                threshold_decades: m.threshold_decades,
            }
        }
    };
    let manifest_out = a.out_dir.join(a.manifest.file_name().unwrap_or_else(|| "manifest.json".as_ref()));
    let fresh = match m.command.as_str() {
        "distill" => cmd_distill(&DistillArgs {
            oracle,
            basis,
            rank: m.rank,
            wa_out: target("wa")?,
            spectrum_out: Some(target("spectrum")?),
            manifest: Some(manifest_out),
        })?,
        "spectrum" => cmd_spectrum(&SpectrumArgs { oracle, basis, out: target("spectrum")?, manifest: Some(manifest_out) })?,
        other => return Err(CliError::Parse(format!("cannot replay command {other:?}"))),
    };
    if fresh.oracle.sha256 != m.oracle.sha256 {
        return Err(CliError::Usage("oracle content differs from the manifest".into()));
    }
    for (key, rec) in &m.outputs {
        let now = &fresh.outputs[key];
        if now.sha256 != rec.sha256 {
            return Err(CliError::Numerical(format!("{key} output differs from the manifest ({} vs {})", now.sha256, rec.sha256)));
        }
    }
    eprintln!("all outputs reproduced");
    Ok(())
}

enum Candidate {
    Wa(Box<WeightedAutomaton>),
    NGram(NGramModel),
    Oracle(Box<dyn Oracle>),
}

impl Candidate {
    fn open(spec: &OracleSpec, opts: &OracleOptions) -> Result<Self, CliError> {
        Ok(match spec {
            OracleSpec::Wa(path) => {
                Candidate::Wa(Box::new(WeightedAutomaton::from_document(&std::fs::read_to_string(path).map_err(io_at(path))?)?))
            }
            OracleSpec::NGram(path) => {
                Candidate::NGram(NGramModel::read(BufReader::new(File::open(path).map_err(io_at(path))?))?)
            }
            other => Candidate::Oracle(open_oracle(other, opts)?.oracle),
        })
    }

    fn alphabet_size(&self) -> usize {
        match self {
            Candidate::Wa(wa) => wa.alphabet().len(),
            Candidate::NGram(m) => m.alphabet_size(),
            Candidate::Oracle(o) => o.alphabet().len(),
        }
    }

    /// `(strategy, rank, wa_params)` columns.
    fn describe(&self) -> (&'static str, usize, Option<usize>) {
        match self {
            Candidate::Wa(wa) => ("wa", wa.rank(), Some(wa_parameter_count(wa.rank(), wa.alphabet().len()))),
            Candidate::NGram(m) => ("ngram", m.n(), None),
            Candidate::Oracle(_) => ("oracle", 0, None),
        }
    }
}

fn run_eval(
    oracle: &OracleArgs,
    candidate: Candidate,
    sets_args: &EvalSetArgs,
    report: Option<&Path>,
    problem: Option<&str>,
    dump: Option<&Path>,
) -> Result<(), CliError> {
    let opened = oracle.open()?;
    let ground = opened.oracle.as_ref();
    if candidate.alphabet_size() != ground.alphabet().len() {
        return Err(CliError::Usage(format!(
            "candidate alphabet size {} differs from the oracle's {}",
            candidate.alphabet_size(),
            ground.alphabet().len()
        )));
    }
    let sets = eval_sets(ground, sets_args.test_file.as_deref(), sets_args.eval_size, sets_args.max_len, sets_args.seed_eval)?;
    if sets.is_empty() {
        return Err(CliError::Usage("no evaluation set: eval-size is 0 and no test file is given".into()));
    }
    let ranking;
    let provider: &dyn RankingProvider = match &candidate {
        Candidate::Wa(wa) => wa.as_ref(),
        Candidate::NGram(m) => m,
        Candidate::Oracle(o) => {
            ranking = OracleRanking(o.as_ref());
            &ranking
        }
    };
    let (strategy, rank, wa_params) = candidate.describe();
    let problem = problem.map_or_else(|| default_problem(&oracle.oracle.to_string()), str::to_string);
    let mut dump_out = dump.map(create).transpose()?;
    let mut rows = Vec::new();
    for set in &sets {
        let start = std::time::Instant::now();
        let d = dump_out.as_mut().map(|w| w as &mut dyn Write);
        let n = sets_args.ndcg_n.min(ground.alphabet().len() + 1);
        let (mut ndcg, wer) = evaluate(ground, provider, set, n, d)?;
        ndcg.metric = Metric::Ndcg(sets_args.ndcg_n);
        let wall_ms = start.elapsed().as_millis() as u64;
        for m in [ndcg, wer] {
            let value = m.value.is_finite().then_some(m.value);
            rows.push(Row {
                problem: problem.clone(),
                strategy: strategy.into(),
                p: 0,
                s: 0,
                rank,
                metric: m.metric.to_string(),
                eval_set: set.source.to_string(),
                value,
                hankel_rank: None,
                wa_params,
                wall_ms,
                status: if value.is_some() { "ok".into() } else { "undefined".into() },
            });
        }
    }
    if let (Some(w), Some(path)) = (dump_out.as_mut(), dump) {
        w.flush().map_err(io_at(path))?;
    }
    match report {
        Some(path) => {
            let mut w = ReportWriter::open(path)?;
            for row in &rows {
                w.append(row)?;
            }
        }
        None => {
            let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
            println!("{HEADER}");
            for row in &rows {
                out.serialize(row)?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let candidate = Candidate::open(&a.candidate, &a.oracle.options())?;
    run_eval(&a.oracle, candidate, &a.sets, a.report.as_deref(), a.problem.as_deref(), a.dump.as_deref())
}

fn cmd_ngram_eval(a: &NgramEvalArgs) -> Result<(), CliError> {
    let candidate = Candidate::open(&OracleSpec::NGram(a.model.clone()), &a.oracle.options())?;
    run_eval(&a.oracle, candidate, &a.sets, a.report.as_deref(), a.problem.as_deref(), a.dump.as_deref())
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
}

pub fn sweep_config(a: &SweepArgs) -> Result<SweepConfig, CliError> {
    let file = match &a.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let sizes = match (a.p, a.s) {
        (None, None) => None,
        (p, s) => {
            let p = p.or(s).expect("one is set");
            Some(vec![(p, s.unwrap_or(p))])
        }
    };
    let ranks = a.rank.clone().map(RanksField::Named);
    let flags = ConfigFile {
        problem: a.problem.clone(),
        oracle: a.oracle.clone(),
        sizes,
        ranks,
        strategies: a.strategy.as_deref().map(split_list),
        seed_basis: a.seed_basis,
        seed_eval: a.seed_eval,
        max_len: a.max_len,
        threshold_decades: a.threshold_decades,
        metrics: a.metrics.as_deref().map(split_list),
        test_file: a.test_file.clone(),
        eval_size: a.eval_size,
        ndcg_n: a.ndcg_n,
        report: a.report.clone(),
        jobs: a.jobs,
    };
    SweepConfig::try_from(file.merge(flags))
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<Vec<Row>, CliError> {
    let cfg = sweep_config(a)?;
    let spec: OracleSpec = cfg.oracle.parse().map_err(CliError::Usage)?;
    let opts = OracleOptions {
        timeout: Duration::from_secs(a.timeout_secs),
        noise: a.noise.map(|l| (l, a.noise_seed)),
        cache_file: a.cache.clone(),
    };
    let opened = open_oracle(&spec, &opts)?;
    let rows = run_sweep(&cfg, opened.oracle.as_ref(), &FillOptions::default())?;
    let failed = rows.iter().filter(|r| r.status != "ok" && r.status != "undefined").count();
    eprintln!("appended {} rows to {} ({failed} error rows)", rows.len(), cfg.report.display());
    Ok(rows)
}

fn cmd_sample(a: &SampleArgs) -> Result<(), CliError> {
    let opened = a.oracle.open()?;
    let oracle = opened.oracle.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed_eval);
    let seqs = (0..a.count).map(|_| oracle.sample_sequence(&mut rng, a.max_len)).collect::<Result<Vec<_>, _>>()?;
    let mut out = create(&a.out)?;
    write_sequences(oracle.alphabet().len(), &seqs, &mut out).and_then(|_| out.flush()).map_err(io_at(&a.out))
}

fn cmd_ngram_train(a: &NgramTrainArgs) -> Result<(), CliError> {
    let (corpus, k) = match (&a.data, &a.oracle) {
        (Some(path), _) => {
            let file = read_sequences_path(path)?;
            (file.sequences, file.alphabet_size)
        }
        (None, Some(spec)) => {
            let opts = OracleOptions { timeout: Duration::from_secs(a.timeout_secs), ..OracleOptions::default() };
            let opened = open_oracle(spec, &opts)?;
            let k = opened.oracle.alphabet().len();
            (sample_corpus(opened.oracle.as_ref(), a.budget, a.max_len, a.seed)?, k)
        }
        (None, None) => return Err(CliError::Usage("either --data or --oracle is required".into())),
    };
    let model = train_ngram(&corpus, a.n, k)?;
    let mut out = create(&a.out)?;
    model.write(&mut out).and_then(|_| out.flush()).map_err(io_at(&a.out))?;
    eprintln!("trained {}-gram on {} symbols", model.n(), model.training_symbols());
    Ok(())
}

fn cmd_pfa_gen(a: &PfaGenArgs) -> Result<(), CliError> {
    let params = PfaParams::new(a.states, a.alphabet).sparsity(a.symbol_sparsity, a.transition_sparsity);
    let wa = random_pfa(params, a.seed)?;
    std::fs::write(&a.out, wa.to_document()).map_err(io_at(&a.out))
}
