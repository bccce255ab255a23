//! WA document format: a JSON object with `format_version`, `alphabet`,
//! `rank`, `alpha0`, `alphaInf`, row-major `matrices` keyed by symbol name,
//! and `stochastic`. Entries are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use super::{WaError, WeightedAutomaton};
use crate::alphabet::Alphabet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("WA document parse error at byte {offset}: {message}")]
pub struct DocumentError {
    pub offset: usize,
    pub message: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    format_version: u32,
    alphabet: Vec<String>,
    rank: usize,
    alpha0: Vec<f64>,
    #[serde(rename = "alphaInf")]
    alpha_inf: Vec<f64>,
    matrices: BTreeMap<String, Vec<Vec<f64>>>,
    stochastic: bool,
}

fn number(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

fn vector(out: &mut String, xs: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        number(out, x);
    }
    out.push(']');
}

pub(super) fn write(wa: &WeightedAutomaton) -> String {
    let mut out = String::new();
    let names = serde_json::to_string(wa.alphabet().names()).unwrap();
    writeln!(out, "{{").unwrap();
    writeln!(out, "  \"format_version\": {FORMAT_VERSION},").unwrap();
    writeln!(out, "  \"alphabet\": {names},").unwrap();
    writeln!(out, "  \"rank\": {},", wa.rank()).unwrap();
    out.push_str("  \"alpha0\": ");
    vector(&mut out, wa.alpha0().iter().copied());
    out.push_str(",\n  \"alphaInf\": ");
    vector(&mut out, wa.alpha_inf().iter().copied());
    out.push_str(",\n  \"matrices\": {\n");
    for (sym, m) in wa.matrices().iter().enumerate() {
        let key = serde_json::to_string(&wa.alphabet().names()[sym]).unwrap();
        write!(out, "    {key}: [").unwrap();
        for row in 0..m.nrows() {
            if row > 0 {
                out.push_str(",\n      ");
            }
            vector(&mut out, m.row(row).iter().copied());
        }
        out.push(']');
        if sym + 1 < wa.matrices().len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  },\n");
    writeln!(out, "  \"stochastic\": {}", wa.is_stochastic()).unwrap();
    out.push_str("}\n");
    out
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn invalid(text: &str, key: &str, message: impl Into<String>) -> WaError {
    let offset = text.find(&format!("\"{key}\"")).unwrap_or(0);
    WaError::Document(DocumentError { offset, message: message.into() })
}

pub(super) fn read(text: &str) -> Result<WeightedAutomaton, WaError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| DocumentError {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if raw.format_version != FORMAT_VERSION {
        return Err(invalid(text, "format_version", format!("unsupported version {}", raw.format_version)));
    }
    let alphabet = Alphabet::new(raw.alphabet).map_err(|e| invalid(text, "alphabet", e.to_string()))?;
    let r = raw.rank;
    if r == 0 {
        return Err(invalid(text, "rank", "rank must be positive"));
    }
    if raw.alpha0.len() != r {
        return Err(invalid(text, "alpha0", format!("expected {r} entries, found {}", raw.alpha0.len())));
    }
    if raw.alpha_inf.len() != r {
        return Err(invalid(text, "alphaInf", format!("expected {r} entries, found {}", raw.alpha_inf.len())));
    }
    if raw.matrices.len() != alphabet.len() {
        return Err(invalid(
            text,
            "matrices",
            format!("{} matrices for {} symbols", raw.matrices.len(), alphabet.len()),
        ));
    }
    let mut matrices = Vec::with_capacity(alphabet.len());
    for name in alphabet.names() {
        let rows = raw
            .matrices
            .get(name)
            .ok_or_else(|| invalid(text, "matrices", format!("missing matrix for symbol {name:?}")))?;
        if rows.len() != r || rows.iter().any(|row| row.len() != r) {
            let shape = format!("{}x{}", rows.len(), rows.first().map_or(0, Vec::len));
            return Err(invalid(text, name, format!("matrix for {name:?} is {shape}, rank is {r}")));
        }
        matrices.push(DMatrix::from_fn(r, r, |i, j| rows[i][j]));
    }
    WeightedAutomaton::new(
        alphabet,
        DVector::from_vec(raw.alpha0),
        matrices,
        DVector::from_vec(raw.alpha_inf),
        raw.stochastic,
    )
    .map_err(|e| match e {
        WaError::Invalid(msg) => invalid(text, "rank", msg),
        other => other,
    })
}
