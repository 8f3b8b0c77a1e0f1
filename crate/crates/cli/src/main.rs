use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, matching the command contract.
    trifuse_cli::run(trifuse_cli::Cli::parse())
}
