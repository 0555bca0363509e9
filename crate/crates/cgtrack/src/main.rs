use std::process::ExitCode;

use clap::Parser;

use cgtrack::cli::{self, Cli};

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
