mod args;
mod commands;
mod output;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::output::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprint!("{e}");
            std::process::exit(2);
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).to_json());
            std::process::exit(2);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.code);
    }
}
