use std::io::{BufRead, Write};

use super::SpectralError;

/// Default gap, in decades of `σ_k/σ₁`, that marks the Hankel rank.
pub const DEFAULT_DROP_DECADES: f64 = 2.0;
/// Fallback cut when no gap reaches the threshold.
pub const FALLBACK_RATIO: f64 = 1e-10;

const FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    /// `log10(σ_k/σ₁)` with values below `1e-300` clamped.
    pub log10_normalized: Vec<f64>,
    pub hankel_rank: usize,
    pub threshold_decades: f64,
    /// The rank came from the `1e-10` fallback or the full length.
    pub fallback: bool,
}

/// Smallest `k` whose drop `log10 σ_k − log10 σ_{k+1}` reaches
/// `drop_threshold_decades`; otherwise the smallest `k` with
/// `σ_{k+1}/σ₁ < 1e-10`; otherwise the number of values.
pub fn detect_hankel_rank(singular_values: &[f64], drop_threshold_decades: f64) -> Result<SpectrumReport, SpectralError> {
    if singular_values.is_empty() {
        return Err(SpectralError::InvalidInput("empty spectrum".into()));
    }
    if singular_values.iter().any(|x| x.is_nan() || *x < 0.0) {
        return Err(SpectralError::InvalidInput("singular values must be nonnegative".into()));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(SpectralError::InvalidInput("singular values must be descending".into()));
    }
    let top = singular_values[0].max(FLOOR);
    let log10_normalized: Vec<f64> = singular_values.iter().map(|&x| (x.max(FLOOR) / top).log10()).collect();

    let by_gap = log10_normalized.windows(2).position(|w| w[0] - w[1] >= drop_threshold_decades);
    let (hankel_rank, fallback) = match by_gap {
        Some(i) => (i + 1, false),
        None => {
            let n = singular_values.len();
            let k = (1..n).find(|&k| singular_values[k] / top < FALLBACK_RATIO).unwrap_or(n);
            (k, true)
        }
    };
    Ok(SpectrumReport {
        singular_values: singular_values.to_vec(),
        log10_normalized,
        hankel_rank,
        threshold_decades: drop_threshold_decades,
        fallback,
    })
}

/// Header `# hankel_rank=<r> threshold_decades=<t>`, then `index<TAB>σ`
/// lines with 1-based indices.
pub fn write_spectrum<W: Write>(report: &SpectrumReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# hankel_rank={} threshold_decades={}", report.hankel_rank, report.threshold_decades)?;
    for (i, s) in report.singular_values.iter().enumerate() {
        writeln!(out, "{}\t{:e}", i + 1, s)?;
    }
    out.flush()
}

/// Reads a spectrum file back and re-runs detection with its threshold.
pub fn read_spectrum<R: BufRead>(input: R) -> Result<SpectrumReport, SpectralError> {
    let bad = |line: usize, msg: &str| SpectralError::InvalidInput(format!("line {line}: {msg}"));
    let mut threshold = None;
    let mut values = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SpectralError::InvalidInput(e.to_string()))?;
        if let Some(header) = line.strip_prefix('#') {
            for kv in header.split_whitespace() {
                if let Some(t) = kv.strip_prefix("threshold_decades=") {
                    threshold = Some(t.parse::<f64>().map_err(|_| bad(i + 1, "bad threshold"))?);
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (_, value) = line.split_once('\t').ok_or_else(|| bad(i + 1, "expected index<TAB>value"))?;
        values.push(value.trim().parse::<f64>().map_err(|_| bad(i + 1, "bad singular value"))?);
    }
    detect_hankel_rank(&values, threshold.unwrap_or(DEFAULT_DROP_DECADES))
}
