use std::process::ExitCode;

use clap::Parser;
use flowsnake_service::cli::{run, Cli, Outcome, EXIT_COLLAPSED, EXIT_FAILURE, EXIT_OK};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::from(EXIT_OK),
        Ok(Outcome::Collapsed) => ExitCode::from(EXIT_COLLAPSED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
