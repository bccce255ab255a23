//! Sweep configuration. The TOML file uses the same names as the command
//! line flags; flags given on the command line win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wadistill::hankel::{Strategy, DEFAULT_MAX_LEN};
use wadistill::metrics::{DEFAULT_EVAL_SIZE, DEFAULT_NDCG_N};
use wadistill::spectral::DEFAULT_DROP_DECADES;

use crate::error::{io_at, CliError};
use crate::schedule::RankSchedule;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RanksField {
    Named(String),
    List(Vec<usize>),
}

/// File form; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub oracle: Option<String>,
    pub sizes: Option<Vec<(usize, usize)>>,
    pub ranks: Option<RanksField>,
    pub strategies: Option<Vec<String>>,
    pub seed_basis: Option<u64>,
    pub seed_eval: Option<u64>,
    pub max_len: Option<usize>,
    pub threshold_decades: Option<f64>,
    pub metrics: Option<Vec<String>>,
    pub test_file: Option<PathBuf>,
    pub eval_size: Option<usize>,
    pub ndcg_n: Option<usize>,
    pub report: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            problem,
            oracle,
            sizes,
            ranks,
            strategies,
            seed_basis,
            seed_eval,
            max_len,
            threshold_decades,
            metrics,
            test_file,
            eval_size,
            ndcg_n,
            report,
            jobs
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Ndcg,
    WerD,
}

/// Validated sweep settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub problem: String,
    pub oracle: String,
    pub sizes: Vec<(usize, usize)>,
    pub ranks: RankSchedule,
    pub strategies: Vec<Strategy>,
    pub seed_basis: u64,
    pub seed_eval: u64,
    pub max_len: usize,
    pub threshold_decades: f64,
    pub metrics: Vec<MetricKind>,
    pub test_file: Option<PathBuf>,
    /// Size of the oracle-sampled set; 0 disables it.
    pub eval_size: usize,
    pub ndcg_n: usize,
    pub report: PathBuf,
    pub jobs: usize,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl TryFrom<ConfigFile> for SweepConfig {
    type Error = CliError;

    fn try_from(c: ConfigFile) -> Result<Self, CliError> {
        let oracle = c.oracle.ok_or_else(|| usage("an oracle is required (--oracle or `oracle` in the config)"))?;
        let report = c.report.ok_or_else(|| usage("a report path is required (--report or `report` in the config)"))?;
        let sizes = c.sizes.unwrap_or_else(|| vec![(100, 100)]);
        if sizes.is_empty() || sizes.iter().any(|&(p, s)| p == 0 || s == 0) {
            return Err(usage("basis sizes must be a non-empty list of positive (p, s) pairs"));
        }
        let ranks = match c.ranks {
            None => RankSchedule::Spice,
            Some(RanksField::Named(name)) => name.parse().map_err(usage)?,
            Some(RanksField::List(list)) => RankSchedule::Explicit(list),
        };
        if let RankSchedule::Explicit(list) = &ranks {
            if list.is_empty() || list.contains(&0) {
                return Err(usage("rank list must be non-empty and contain positive ranks"));
            }
        }
        let strategies = c
            .strategies
            .unwrap_or_else(|| vec!["oracle".into()])
            .iter()
            .map(|s| match s.parse::<Strategy>() {
                Ok(Strategy::Explicit) | Err(_) => Err(usage(format!("strategy {s:?} must be uniform or oracle"))),
                Ok(st) => Ok(st),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if strategies.is_empty() {
            return Err(usage("at least one strategy is required"));
        }
        let metrics = c
            .metrics
            .unwrap_or_else(|| vec!["ndcg".into(), "wer-d".into()])
            .iter()
            .map(|m| match m.to_ascii_lowercase().as_str() {
                "ndcg" => Ok(MetricKind::Ndcg),
                "wer-d" | "werd" | "wer_d" => Ok(MetricKind::WerD),
                _ => Err(usage(format!("unknown metric {m:?} (expected ndcg or wer-d)"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if metrics.is_empty() {
            return Err(usage("at least one metric is required"));
        }
        let eval_size = c.eval_size.unwrap_or(DEFAULT_EVAL_SIZE);
        if eval_size == 0 && c.test_file.is_none() {
            return Err(usage("no evaluation set: eval-size is 0 and no test file is given"));
        }
        let jobs = c.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(usage("jobs must be at least 1"));
        }
        let threshold_decades = c.threshold_decades.unwrap_or(DEFAULT_DROP_DECADES);
        if threshold_decades.is_nan() || threshold_decades < 0.0 {
            return Err(usage("threshold-decades must be a nonnegative number"));
        }
        let ndcg_n = c.ndcg_n.unwrap_or(DEFAULT_NDCG_N);
        if ndcg_n == 0 {
            return Err(usage("ndcg-n must be at least 1"));
        }
        let problem = c.problem.unwrap_or_else(|| default_problem(&oracle));
        Ok(SweepConfig {
            problem,
            oracle,
            sizes,
            ranks,
            strategies,
            seed_basis: c.seed_basis.unwrap_or(0),
            seed_eval: c.seed_eval.unwrap_or(1),
            max_len: c.max_len.unwrap_or(DEFAULT_MAX_LEN),
            threshold_decades,
            metrics,
            test_file: c.test_file,
            eval_size,
            ndcg_n,
            report,
            jobs,
        })
    }
}

/// File stem of the oracle argument, or the whole spec for external oracles.
pub fn default_problem(oracle: &str) -> String {
    match oracle.split_once(':') {
        Some(("wa" | "ngram", path)) => {
            Path::new(path).file_stem().map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned())
        }
        _ => oracle.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
problem = "p7"
oracle = "wa:target.json"
sizes = [[50, 60], [100, 100]]
ranks = [1, 2, 4]
strategies = ["uniform", "oracle"]
seed-basis = 3
metrics = ["wer-d"]
report = "out.csv"
"#;

    #[test]
    fn file_values_and_overrides() {
        let file: ConfigFile = toml::from_str(SAMPLE).unwrap();
        let over = ConfigFile { seed_basis: Some(9), ranks: Some(RanksField::Named("pautomac".into())), ..Default::default() };
        let cfg = SweepConfig::try_from(file.clone().merge(over)).unwrap();
        assert_eq!(cfg.seed_basis, 9);
        assert_eq!(cfg.ranks, RankSchedule::Pautomac);
        assert_eq!(cfg.sizes, vec![(50, 60), (100, 100)]);
        assert_eq!(cfg.strategies, vec![Strategy::Uniform, Strategy::Oracle]);
        assert_eq!(cfg.metrics, vec![MetricKind::WerD]);
        assert_eq!(cfg.seed_eval, 1);
        let cfg = SweepConfig::try_from(file).unwrap();
        assert_eq!(cfg.ranks, RankSchedule::Explicit(vec![1, 2, 4]));
        assert_eq!(cfg.problem, "p7");
    }

    #[test]
    fn rejects_bad_values() {
        let base = || ConfigFile { oracle: Some("wa:x.json".into()), report: Some("r.csv".into()), ..Default::default() };
        assert!(SweepConfig::try_from(base()).is_ok());
        assert_eq!(SweepConfig::try_from(base()).unwrap().problem, "x");
        let bad = [
            ConfigFile { ranks: Some(RanksField::List(vec![])), ..base() },
            ConfigFile { sizes: Some(vec![(0, 3)]), ..base() },
            ConfigFile { strategies: Some(vec!["explicit".into()]), ..base() },
            ConfigFile { metrics: Some(vec!["bleu".into()]), ..base() },
            ConfigFile { jobs: Some(0), ..base() },
            ConfigFile { oracle: None, ..base() },
        ];
        for c in bad {
            assert!(matches!(SweepConfig::try_from(c), Err(CliError::Usage(_))));
        }
        assert!(toml::from_str::<ConfigFile>("colour = 1").is_err());
    }
}
