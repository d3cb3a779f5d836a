use std::process::ExitCode;

use clap::Parser;
use farey_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("farey {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
