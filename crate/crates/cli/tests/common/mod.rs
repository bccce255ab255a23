#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const WADISTILL: &str = env!("CARGO_BIN_EXE_wadistill");
pub const MOCK: &str = env!("CARGO_BIN_EXE_mock-oracle");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn wadistill(args: &[&str]) -> Output {
    Command::new(WADISTILL).args(args).output().expect("spawn wadistill")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// `exec:` spec running the mock server on a WA document.
pub fn mock_wa(doc: &Path) -> String {
    format!("exec:{MOCK} --wa {}", doc.display())
}

pub const GEOMETRIC: &str = r#"{"format_version":1,"alphabet":["a"],"rank":1,"alpha0":[1.0],"alphaInf":[0.5],"matrices":{"a":[[0.5]]},"stochastic":true}"#;
