use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kacmix_cli::{parse_config, run_with_workers, Command, Overrides};

/// Runs one experiment and writes its tables and manifest.
#[derive(Parser, Debug)]
#[command(name = "kacmix", version)]
struct Cli {
    /// exact | thermo | sample | young | fk-diagnose | equivalence
    command: Option<String>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Override a config key, e.g. `--set model.beta=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command.as_deref().map(str::parse::<Command>).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        command,
        seed: cli.seed,
        out: cli.out,
        set: cli.set,
    };
    let cfg = match parse_config(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_with_workers(&cfg, cli.workers) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
