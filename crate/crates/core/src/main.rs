use std::process::ExitCode;

use clap::Parser;
use peelkit_core::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::run(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", cli::error_report(&e));
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
