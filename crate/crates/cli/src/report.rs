//! Append-only CSV report with one row per (configuration, metric, eval set).

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError};

pub const HEADER: &str = "problem,strategy,p,s,rank,metric,eval_set,value,hankel_rank,wa_params,wall_ms,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub problem: String,
    pub strategy: String,
    pub p: usize,
    pub s: usize,
    pub rank: usize,
    pub metric: String,
    pub eval_set: String,
    pub value: Option<f64>,
    pub hankel_rank: Option<usize>,
    pub wa_params: Option<usize>,
    pub wall_ms: u64,
    pub status: String,
}

pub struct ReportWriter {
    inner: csv::Writer<File>,
}

impl ReportWriter {
    /// Opens `path` for appending. A missing or empty file gets the header;
    /// a partial last line left by an interrupted run is cut off.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path).map_err(io_at(path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_at(path))?;
        if text.is_empty() {
            writeln!(file, "{HEADER}").map_err(io_at(path))?;
        } else {
            if text.lines().next() != Some(HEADER) {
                return Err(CliError::Parse(format!("{} is not a report file (unexpected header)", path.display())));
            }
            if !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1) as u64;
                file.set_len(keep).map_err(io_at(path))?;
            }
        }
        file.seek(SeekFrom::End(0)).map_err(io_at(path))?;
        let inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(Self { inner })
    }

    /// Writes and flushes one row.
    pub fn append(&mut self, row: &Row) -> Result<(), CliError> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_report(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(CliError::from)).collect()
}
