//! Sequence files in the PAutomaC layout: a header `<count> <alphabet_size>`,
//! then one `<len> <id_1> … <id_len>` line per sequence.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::oracle::Seq;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFile {
    pub alphabet_size: usize,
    pub sequences: Vec<Seq>,
}

pub fn read_sequences<R: BufRead>(input: R) -> Result<SequenceFile, ParseError> {
    let io = |e: std::io::Error| ParseError::Io { path: "<input>".into(), source: e };
    let mut lines = input.lines();
    let header = lines.next().transpose().map_err(io)?.ok_or_else(|| syntax(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    let mut num = |what: &str| -> Result<usize, ParseError> {
        let t = toks.next().ok_or_else(|| syntax(1, format!("missing {what}")))?;
        t.parse().map_err(|_| syntax(1, format!("invalid {what} {t:?}")))
    };
    let count = num("sequence count")?;
    let alphabet_size = num("alphabet size")?;
    if alphabet_size == 0 {
        return Err(syntax(1, "alphabet size must be positive"));
    }

    let mut sequences = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.map_err(io)?;
        let mut toks = line.split_whitespace();
        let Some(first) = toks.next() else { continue };
        let len: usize = first.parse().map_err(|_| syntax(no, format!("invalid length {first:?}")))?;
        let mut seq = Vec::with_capacity(len);
        for t in toks {
            let id: usize = t.parse().map_err(|_| syntax(no, format!("invalid symbol id {t:?}")))?;
            if id >= alphabet_size {
                return Err(syntax(no, format!("symbol id {id} outside alphabet of size {alphabet_size}")));
            }
            seq.push(id);
        }
        if seq.len() != len {
            return Err(syntax(no, format!("declared length {len} but found {} ids", seq.len())));
        }
        sequences.push(seq);
    }
    if sequences.len() != count {
        return Err(syntax(1, format!("header declares {count} sequences, found {}", sequences.len())));
    }
    Ok(SequenceFile { alphabet_size, sequences })
}

pub fn read_sequences_path(path: &Path) -> Result<SequenceFile, ParseError> {
    let file = File::open(path).map_err(|e| ParseError::Io { path: path.display().to_string(), source: e })?;
    read_sequences(BufReader::new(file))
}

pub fn write_sequences<W: Write>(alphabet_size: usize, sequences: &[Seq], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", sequences.len(), alphabet_size)?;
    for seq in sequences {
        write!(out, "{}", seq.len())?;
        for s in seq {
            write!(out, " {s}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture() {
        let f = read_sequences("2 2\n1 0\n2 0 1\n".as_bytes()).unwrap();
        assert_eq!(f.sequences, vec![vec![0], vec![0, 1]]);
        assert_eq!(f.alphabet_size, 2);
        let mut out = Vec::new();
        write_sequences(2, &f.sequences, &mut out).unwrap();
        assert_eq!(out, b"2 2\n1 0\n2 0 1\n");
        let empty = read_sequences("1 3\n0\n".as_bytes()).unwrap();
        assert_eq!(empty.sequences, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = |s: &str| match read_sequences(s.as_bytes()) {
            Err(ParseError::Syntax { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("2 2\n1 0\n3 0 1\n"), 3);
        assert_eq!(err("1 2\n1 2\n"), 2);
        assert_eq!(err("3 2\n1 0\n"), 1);
        assert_eq!(err("x 2\n"), 1);
        assert_eq!(err(""), 1);
    }
}
