//! Command-line pipelines around the `wadistill` library: distillation,
//! evaluation, rank sweeps, spectra, n-gram baselines and a scripted mock
//! oracle server.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mock;
pub mod oracle_spec;
pub mod pipeline;
pub mod report;
pub mod schedule;

pub use commands::{run, Cli};
pub use error::CliError;
