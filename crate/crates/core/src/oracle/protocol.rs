//! Newline-delimited JSON wire protocol between the distiller and an
//! external oracle process.
//!
//! ```text
//! → {"op":"hello","version":1}          ← {"ok":true,"alphabet_size":N,"supports_next_dist":true}
//! → {"op":"logprob","seqs":[[0,1],[2]]} ← {"ok":true,"logprobs":[-3.1781,"-inf"]}
//! → {"op":"next_dist","prefixes":[[0]]} ← {"ok":true,"dists":[[0.4375,0.4375,0.0625]]}
//! → {"op":"shutdown"}                   ← {"ok":true}
//! ```
//!
//! Failures are reported as `{"ok":false,"error":"<code>","detail":"..."}`.

use std::io::{self, BufRead, Write};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::{Oracle, OracleError, Seq};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello { version: u32 },
    Logprob { seqs: Vec<Seq> },
    NextDist { prefixes: Vec<Seq> },
    Shutdown,
}

/// Natural-log probability; `-inf` travels as the string `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireLogProb(pub f64);

impl Serialize for WireLogProb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for WireLogProb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(WireLogProb(x)),
            Raw::Text(t) if t == "-inf" => Ok(WireLogProb(f64::NEG_INFINITY)),
            Raw::Text(t) if t.eq_ignore_ascii_case("nan") => Ok(WireLogProb(f64::NAN)),
            Raw::Text(t) => Err(de::Error::custom(format!("invalid log-probability {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports_next_dist: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<WireLogProb>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dists: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Response {
    pub fn ok() -> Self {
        Self { ok: true, ..Self::default() }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Self { ok: false, error: Some(code.to_string()), detail: Some(detail.into()), ..Self::default() }
    }

    /// Converts an `ok:false` envelope into an error.
    pub fn into_result(self) -> Result<Self, OracleError> {
        if self.ok {
            return Ok(self);
        }
        let code = self.error.unwrap_or_else(|| "unknown".into());
        let detail = self.detail.unwrap_or_default();
        Err(match code.as_str() {
            "unavailable" | "timeout" | "busy" => OracleError::Unavailable(format!("{code}: {detail}")),
            "unsupported" => OracleError::Capability("next_dist"),
            _ => OracleError::Protocol(format!("{code}: {detail}")),
        })
    }
}

pub fn error_code(err: &OracleError) -> &'static str {
    match err {
        OracleError::Unavailable(_) => "unavailable",
        OracleError::CorruptAnswer(_) => "corrupt",
        OracleError::Capability(_) => "unsupported",
        OracleError::Protocol(_) => "protocol",
        OracleError::InvalidSymbol { .. } => "invalid_symbol",
    }
}

/// Answers one request from `oracle`.
pub fn respond<O: Oracle + ?Sized>(oracle: &O, request: &Request) -> Response {
    match request {
        Request::Hello { version } if *version != PROTOCOL_VERSION => {
            Response::error("version", format!("unsupported protocol version {version}"))
        }
        Request::Hello { .. } => Response {
            ok: true,
            alphabet_size: Some(oracle.alphabet().len()),
            supports_next_dist: Some(oracle.capabilities().supports_next_dist),
            ..Response::default()
        },
        Request::Logprob { seqs } => {
            match oracle.logprob_batch(seqs).into_iter().collect::<Result<Vec<f64>, _>>() {
                Ok(lps) => Response { ok: true, logprobs: Some(lps.into_iter().map(WireLogProb).collect()), ..Response::default() },
                Err(e) => Response::error(error_code(&e), e.to_string()),
            }
        }
        Request::NextDist { prefixes } => {
            match oracle.next_dist_batch(prefixes).into_iter().collect::<Result<Vec<_>, _>>() {
                Ok(dists) => Response { ok: true, dists: Some(dists), ..Response::default() },
                Err(e) => Response::error(error_code(&e), e.to_string()),
            }
        }
        Request::Shutdown => Response::ok(),
    }
}

pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("protocol messages always serialize")
}

/// Serves requests line by line until shutdown or end of input. Malformed
/// lines get an error response and the connection stays open.
pub fn serve<O, R, W>(oracle: &O, reader: R, mut writer: W) -> io::Result<()>
where
    O: Oracle + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, stop) = match serde_json::from_str::<Request>(&line) {
            Ok(request) => (respond(oracle, &request), request == Request::Shutdown),
            Err(e) => (Response::error("bad_request", e.to_string()), false),
        };
        writeln!(writer, "{}", encode(&response))?;
        writer.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}
