//! Scripted protocol server for tests and conformance checks.
//!
//! A transcript is a text file of `> request` and `< response` lines (blank
//! lines and `#` comments are ignored). The server expects each request in
//! order, compares it to the script as JSON values and answers with the
//! scripted responses verbatim. Any deviation is answered with an
//! `unexpected_request` error and makes the server exit with status 1.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::Value;

use wadistill::oracle::protocol::{encode, respond, Request, Response};
use wadistill::oracle::WaOracle;
use wadistill::WeightedAutomaton;

use crate::error::{io_at, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub request: Value,
    pub responses: Vec<String>,
}

pub fn parse_transcript(text: &str) -> Result<Vec<Exchange>, CliError> {
    let mut steps: Vec<Exchange> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| CliError::Parse(format!("transcript line {}: {m}", i + 1));
        if let Some(req) = line.strip_prefix('>') {
            let request = serde_json::from_str(req.trim()).map_err(|e| bad(&e.to_string()))?;
            steps.push(Exchange { request, responses: Vec::new() });
        } else if let Some(resp) = line.strip_prefix('<') {
            let resp = resp.trim();
            serde_json::from_str::<Value>(resp).map_err(|e| bad(&e.to_string()))?;
            steps.last_mut().ok_or_else(|| bad("response before any request"))?.responses.push(resp.to_string());
        } else {
            return Err(bad("expected a line starting with '>' or '<'"));
        }
    }
    Ok(steps)
}

pub fn load_transcript(path: &Path) -> Result<Vec<Exchange>, CliError> {
    parse_transcript(&std::fs::read_to_string(path).map_err(io_at(path))?)
}

enum Mode {
    Script(Vec<Exchange>),
    Automaton(WaOracle),
}

/// What ended a session.
#[derive(Debug, PartialEq, Eq)]
enum Ending {
    Shutdown,
    Disconnected,
}

struct Session<'a> {
    mode: &'a Mode,
    stall_after: Option<usize>,
    answered: usize,
    step: usize,
    failed: bool,
}

impl Session<'_> {
    fn reply(&mut self, line: &str) -> (Vec<String>, bool) {
        match self.mode {
            Mode::Automaton(oracle) => match serde_json::from_str::<Request>(line) {
                Ok(req) => (vec![encode(&respond(oracle, &req))], req == Request::Shutdown),
                Err(e) => (vec![encode(&Response::error("bad_request", e.to_string()))], false),
            },
            Mode::Script(steps) => {
                let got: Value = match serde_json::from_str(line) {
                    Ok(v) => v,
                    Err(e) => {
                        self.failed = true;
                        return (vec![encode(&Response::error("bad_request", e.to_string()))], false);
                    }
                };
                let is_shutdown = got.get("op").and_then(Value::as_str) == Some("shutdown");
                match steps.get(self.step) {
                    Some(step) if step.request == got => {
                        self.step += 1;
                        (step.responses.clone(), is_shutdown)
                    }
                    expected => {
                        self.failed = true;
                        let want = expected.map_or_else(|| "end of transcript".to_string(), |s| s.request.to_string());
                        let detail = format!("expected {want}, got {got}");
                        eprintln!("mock-oracle: {detail}");
                        (vec![encode(&Response::error("unexpected_request", detail))], is_shutdown)
                    }
                }
            }
        }
    }

    fn run<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> io::Result<Ending> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if self.stall_after.is_some_and(|n| self.answered >= n) {
                // Swallow input without answering until the peer hangs up.
                continue;
            }
            let (responses, stop) = self.reply(&line);
            for r in responses {
                writeln!(writer, "{r}")?;
            }
            writer.flush()?;
            self.answered += 1;
            if stop {
                return Ok(Ending::Shutdown);
            }
        }
        Ok(Ending::Disconnected)
    }

    fn complete(&self) -> bool {
        match self.mode {
            Mode::Script(steps) => !self.failed && self.step == steps.len(),
            Mode::Automaton(_) => true,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mock-oracle", about = "Scripted or automaton-backed oracle server speaking the line protocol")]
pub struct MockArgs {
    /// Replay this transcript.
    #[arg(long, conflicts_with = "wa", required_unless_present = "wa")]
    pub transcript: Option<PathBuf>,
    /// Answer from this WA document.
    #[arg(long)]
    pub wa: Option<PathBuf>,
    /// Stop answering after this many responses.
    #[arg(long)]
    pub stall_after: Option<usize>,
    /// Listen on TCP instead of stdio and print the bound address.
    #[arg(long)]
    pub listen: Option<String>,
}

/// Runs the server; returns the process exit status.
pub fn run(args: &MockArgs) -> Result<i32, CliError> {
    let mode = match (&args.transcript, &args.wa) {
        (Some(path), _) => Mode::Script(load_transcript(path)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(io_at(path))?;
            Mode::Automaton(WaOracle::new(WeightedAutomaton::from_document(&text)?))
        }
        (None, None) => return Err(CliError::Usage("either --transcript or --wa is required".into())),
    };
    let new_session = || Session { mode: &mode, stall_after: args.stall_after, answered: 0, step: 0, failed: false };

    let Some(addr) = &args.listen else {
        let mut session = new_session();
        session.run(io::stdin().lock(), io::stdout().lock())?;
        return Ok(if session.complete() { 0 } else { 1 });
    };
    let listener = TcpListener::bind(addr)?;
    println!("{}", listener.local_addr()?);
    io::stdout().flush()?;
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = BufReader::new(stream.try_clone()?);
        let mut session = new_session();
        // A dropped connection lets the client reconnect with a fresh script.
        if session.run(reader, stream)? == Ending::Shutdown {
            return Ok(if session.complete() { 0 } else { 1 });
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCRIPT: &str = "# greeting\n> {\"op\":\"hello\",\"version\":1}\n< {\"ok\":true,\"alphabet_size\":2,\"supports_next_dist\":true}\n\n> {\"op\":\"shutdown\"}\n< {\"ok\":true}\n";

    fn replay(script: &str, input: &str) -> (String, bool) {
        let mode = Mode::Script(parse_transcript(script).unwrap());
        let mut s = Session { mode: &mode, stall_after: None, answered: 0, step: 0, failed: false };
        let mut out = Vec::new();
        s.run(input.as_bytes(), &mut out).unwrap();
        (String::from_utf8(out).unwrap(), s.complete())
    }

    #[test]
    fn scripted_exchange_is_order_insensitive_in_keys() {
        let (out, ok) = replay(SCRIPT, "{\"version\":1,\"op\":\"hello\"}\n{\"op\":\"shutdown\"}\n");
        assert!(ok);
        assert_eq!(out.lines().count(), 2);
        assert!(out.starts_with("{\"ok\":true,\"alphabet_size\":2"));
    }

    #[test]
    fn deviation_is_reported() {
        let (out, ok) = replay(SCRIPT, "{\"op\":\"logprob\",\"seqs\":[[0]]}\n");
        assert!(!ok);
        assert!(out.contains("unexpected_request"));
        let (_, ok) = replay(SCRIPT, "{\"op\":\"hello\",\"version\":1}\n");
        assert!(!ok, "unfinished transcript");
    }

    #[test]
    fn malformed_transcripts_are_rejected() {
        assert!(parse_transcript("< {\"ok\":true}\n").is_err());
        assert!(parse_transcript("> {oops\n").is_err());
        assert!(parse_transcript("hello\n").is_err());
    }
}
