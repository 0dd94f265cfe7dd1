use std::process::ExitCode;

use clap::Parser;
use cvar_ssp_cli::{error_json, run_experiment, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    let out = args.out_dir();
    match args.to_config().and_then(|cfg| run_experiment(&cfg, &out)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary.result).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(2)
        }
    }
}
