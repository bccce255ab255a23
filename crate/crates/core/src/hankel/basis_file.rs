//! Text format: a header `p s |Σ| max_len seed strategy`, then `p` prefix
//! lines and `s` suffix lines, each `<len> <id_1> … <id_len>`.

use std::io::{BufRead, Write};

use super::{canonical_cmp, Basis, HankelError, Strategy};
use crate::oracle::Seq;

pub fn write_basis<W: Write>(basis: &Basis, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "{} {} {} {} {} {}",
        basis.p(),
        basis.s(),
        basis.alphabet_size(),
        basis.max_len,
        basis.seed,
        basis.strategy
    )?;
    for w in basis.prefixes().iter().chain(basis.suffixes()) {
        write!(out, "{}", w.len())?;
        for s in w {
            write!(out, " {s}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

fn parse_err(line: usize, message: impl Into<String>) -> HankelError {
    HankelError::Parse { line, message: message.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<T, HankelError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("invalid {what} {tok:?}")))
}

pub fn read_basis<R: BufRead>(input: R) -> Result<Basis, HankelError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty basis file"))?;
    let header = header?;
    let mut toks = header.split_whitespace();
    let p: usize = field(toks.next(), "p", 1)?;
    let s: usize = field(toks.next(), "s", 1)?;
    let k: usize = field(toks.next(), "alphabet size", 1)?;
    let max_len: usize = field(toks.next(), "max_len", 1)?;
    let seed: u64 = field(toks.next(), "seed", 1)?;
    let strategy: Strategy = {
        let tok = toks.next().ok_or_else(|| parse_err(1, "missing strategy"))?;
        tok.parse().map_err(|e: String| parse_err(1, e))?
    };
    if toks.next().is_some() {
        return Err(parse_err(1, "trailing fields in header"));
    }

    let mut seqs: Vec<Seq> = Vec::with_capacity(p + s);
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let len: usize = field(toks.next(), "length", no)?;
        let w: Seq = toks.map(|t| field::<usize>(Some(t), "symbol id", no)).collect::<Result<_, _>>()?;
        if w.len() != len {
            return Err(parse_err(no, format!("declared length {len} but found {} ids", w.len())));
        }
        if let Some(bad) = w.iter().find(|&&x| x >= k) {
            return Err(parse_err(no, format!("symbol id {bad} outside alphabet of size {k}")));
        }
        seqs.push(w);
    }
    if seqs.len() != p + s {
        return Err(parse_err(1, format!("header declares {} sequences, file has {}", p + s, seqs.len())));
    }
    let suffixes = seqs.split_off(p);
    for set in [&seqs, &suffixes] {
        if set.windows(2).any(|w| canonical_cmp(&w[0], &w[1]) != std::cmp::Ordering::Less) {
            return Err(parse_err(1, "sequences are not in canonical order"));
        }
    }
    let mut basis = Basis::new(k, seqs, suffixes)?;
    basis.strategy = strategy;
    basis.max_len = max_len;
    basis.seed = seed;
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::gen_basis_uniform;

    #[test]
    fn round_trip() {
        let b = gen_basis_uniform(3, 40, 30, 7, 2).unwrap();
        let mut buf = Vec::new();
        write_basis(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{} {} 3 7 2 uniform\n0\n", b.p(), b.s())));
        assert_eq!(read_basis(buf.as_slice()).unwrap(), b);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "2 1 2 3 0 uniform\n0\n2 0\n0\n";
        assert!(matches!(read_basis(bad.as_bytes()), Err(HankelError::Parse { line: 3, .. })));
        let bad = "2 1 2 3 0 uniform\n0\n1 5\n0\n";
        assert!(matches!(read_basis(bad.as_bytes()), Err(HankelError::Parse { line: 3, .. })));
        let bad = "2 1 2 3 0 magic\n";
        assert!(matches!(read_basis(bad.as_bytes()), Err(HankelError::Parse { line: 1, .. })));
        let short = "2 1 2 3 0 uniform\n0\n";
        assert!(matches!(read_basis(short.as_bytes()), Err(HankelError::Parse { .. })));
    }
}
