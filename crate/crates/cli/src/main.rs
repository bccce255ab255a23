use std::process::ExitCode;

use clap::Parser;

use wadistill_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses status 2 for usage errors and 0 for --help.
            e.exit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wadistill: {}: {e}", e.family());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
