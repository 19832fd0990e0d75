use std::process::ExitCode;

use clap::Parser;
use snippet_forge::cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
