use std::process::ExitCode;

use clap::Parser;
use normeq::cli::{execute, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("normeq: {e}");
            ExitCode::from(if matches!(e, normeq::Error::Usage(_)) { 2 } else { 1 })
        }
    }
}
