use std::process::ExitCode;

use clap::Parser;

use wadistill_cli::mock::{run, MockArgs};

fn main() -> ExitCode {
    let args = MockArgs::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("mock-oracle: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
