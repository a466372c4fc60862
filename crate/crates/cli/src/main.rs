use std::process::ExitCode;

use clap::Parser;
use escapade_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.into_manifest().and_then(|m| run(&m));
    match result {
        Ok(report) => {
            if let Some(text) = &report.stdout {
                println!("{text}");
            }
            for v in &report.verdicts {
                println!("{}", v.line());
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
