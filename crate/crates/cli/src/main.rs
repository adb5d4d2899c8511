use std::process::ExitCode;

use clap::Parser;
use metaholo_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match metaholo_cli::commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("metaholo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
