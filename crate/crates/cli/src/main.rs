use std::process::ExitCode;

use clap::Parser;
use hcart::Cli;

fn main() -> ExitCode {
    match hcart::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hcart: {e}");
            e.exit_code()
        }
    }
}
