use std::path::PathBuf;
use std::process::ExitCode;

use antiplane_cli::{parse_config, run, Command};
use anyhow::Context;
use clap::Parser;

/// Finite element experiments for frictional antiplane shear.
#[derive(Debug, Parser)]
#[command(name = "antiplane", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run: out`, defaults to `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `run: seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut config = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let out = cli
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match run(cli.command, &config, &out).with_context(|| format!("{:?} failed", cli.command)) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<antiplane_cli::RunError>().map_or(1, |r| r.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
