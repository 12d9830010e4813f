use anyhow::Result;
use clap::Parser;
use o2pac_cli::{config, execute, ExecOptions, OUT_DIR_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run an o2pac experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "o2pac", version, about)]
struct Cli {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = config::load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let base_dir = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let out = execute(&cfg, &ExecOptions { out_dir: cli.out, jobs: cli.jobs, base_dir })?;
    println!("{} {}", if out.passed { "PASS" } else { "FAIL" }, cfg.command.name());
    println!("summary: {}", out.summary_path.display());
    println!("table:   {}", out.csv_path.display());
    Ok(out.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
