use std::process::ExitCode;

use clap::Parser;
use insider_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) if o.ok => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("insider {}: one or more checks failed", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
