use thiserror::Error;

use wadistill::hankel::HankelError;
use wadistill::metrics::MetricError;
use wadistill::ngram::NGramError;
use wadistill::pautomac::ParseError;
use wadistill::spectral::SpectralError;
use wadistill::{OracleError, WaError};

/// Error families, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    OracleUnavailable(String),
    #[error("{0}")]
    Oracle(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Basis(String),
    #[error("{0}")]
    Io(String),
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const ORACLE_UNAVAILABLE: i32 = 4;
    pub const ORACLE: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    pub const BASIS: i32 = 7;
    pub const IO: i32 = 8;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse(_) => exit::PARSE,
            CliError::OracleUnavailable(_) => exit::ORACLE_UNAVAILABLE,
            CliError::Oracle(_) => exit::ORACLE,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Basis(_) => exit::BASIS,
            CliError::Io(_) => exit::IO,
        }
    }

    /// Short family name used in report `status` cells.
    pub fn family(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "invalid_input",
            CliError::Parse(_) => "parse_error",
            CliError::OracleUnavailable(_) => "oracle_unavailable",
            CliError::Oracle(_) => "oracle_error",
            CliError::Numerical(_) => "numerical_failure",
            CliError::Basis(_) => "basis_error",
            CliError::Io(_) => "io_error",
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Unavailable(_) => CliError::OracleUnavailable(e.to_string()),
            OracleError::InvalidSymbol { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Oracle(e.to_string()),
        }
    }
}

impl From<HankelError> for CliError {
    fn from(e: HankelError) -> Self {
        match e {
            HankelError::Oracle(o) => o.into(),
            HankelError::InvalidInput(m) => CliError::Usage(m),
            HankelError::Parse { .. } | HankelError::InvalidBasis(_) => CliError::Parse(e.to_string()),
            HankelError::Io(io) => io.into(),
            HankelError::FillAborted { ref reason, .. } if reason.starts_with("oracle unavailable") => {
                CliError::OracleUnavailable(e.to_string())
            }
            HankelError::BasisExhausted { .. } | HankelError::FillAborted { .. } => CliError::Basis(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidInput(m) => CliError::Usage(m),
            SpectralError::NumericalFailure(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Oracle(o) => o.into(),
            MetricError::Parse(p) => p.into(),
            MetricError::InvalidInput(m) => CliError::Usage(m),
            MetricError::Candidate(m) => CliError::Numerical(m),
            MetricError::Io(io) => io.into(),
        }
    }
}

impl From<NGramError> for CliError {
    fn from(e: NGramError) -> Self {
        match e {
            NGramError::Oracle(o) => o.into(),
            NGramError::InvalidInput(m) => CliError::Usage(m),
            NGramError::Parse { .. } => CliError::Parse(e.to_string()),
            NGramError::Io(io) => io.into(),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<WaError> for CliError {
    fn from(e: WaError) -> Self {
        match e {
            WaError::Document(_) => CliError::Parse(e.to_string()),
            WaError::InvalidSymbol { .. } => CliError::Usage(e.to_string()),
            WaError::Invalid(_) | WaError::GenerationFailed { .. } => CliError::Usage(e.to_string()),
            WaError::NonStochastic(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Attaches a path to an I/O failure.
pub fn io_at(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}
