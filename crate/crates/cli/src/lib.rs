//! Batch front end for the o2pac laboratory.
//!
//! [`execute`] runs one experiment config and writes two artifacts to the
//! output directory: `<command>.json`, a summary that embeds the effective
//! config, the seed, the schema version and the SHA-256 of the table, and
//! `<command>.csv`, one row per replicate. Identical configs produce
//! byte-identical artifacts at any `--jobs` setting.

pub mod commands;
pub mod config;
pub mod oracle;

use anyhow::{Context, Result};
use commands::CommandReport;
use config::{ExperimentConfig, SCHEMA_VERSION};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "O2PAC_OUT_DIR";

/// Output directory used when neither flag, config nor environment names one.
pub const DEFAULT_OUT_DIR: &str = "o2pac-out";

pub const SUMMARY_SCHEMA: &str = "o2pac.summary";

/// Runtime settings that do not affect the artifacts.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

/// Paths and contents of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub passed: bool,
    pub summary_path: PathBuf,
    pub csv_path: PathBuf,
    pub summary: String,
    pub csv: String,
}

#[derive(Serialize)]
struct CsvInfo<'a> {
    file: &'a str,
    rows: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    schema_version: u32,
    tool_version: &'static str,
    command: &'static str,
    seed: u64,
    passed: bool,
    csv: CsvInfo<'a>,
    config: &'a ExperimentConfig,
    results: &'a serde_json::Value,
}

/// Resolves the output directory: flag, then config, then environment, then the default.
pub fn output_dir(config: &ExperimentConfig, opts: &ExecOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| config.output.as_ref().map(|p| opts.base_dir.join(p)))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs the command and renders both artifacts without touching the disk.
pub fn render(config: &ExperimentConfig, opts: &ExecOptions) -> Result<(bool, String, String)> {
    let report = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .context("building worker pool")?
            .install(|| commands::run_command(config, &opts.base_dir))?,
        None => commands::run_command(config, &opts.base_dir)?,
    };
    let csv = render_csv(&report)?;
    let name = format!("{}.csv", config.command.name());
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: config.command.name(),
        seed: config.seed,
        passed: report.passed,
        csv: CsvInfo { file: &name, rows: report.rows.len(), sha256: sha256_hex(csv.as_bytes()) },
        config,
        results: &report.results,
    };
    let mut json = o2pac::json::to_string(&summary)?;
    json.push('\n');
    Ok((report.passed, json, csv))
}

/// Runs the command and writes `<command>.json` and `<command>.csv`.
pub fn execute(config: &ExperimentConfig, opts: &ExecOptions) -> Result<RunOutput> {
    let (passed, summary, csv) = render(config, opts)?;
    let dir = output_dir(config, opts);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let summary_path = dir.join(format!("{}.json", config.command.name()));
    let csv_path = dir.join(format!("{}.csv", config.command.name()));
    write(&summary_path, &summary)?;
    write(&csv_path, &csv)?;
    Ok(RunOutput { passed, summary_path, csv_path, summary, csv })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn render_csv(report: &CommandReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&report.header)?;
    for row in &report.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes)?)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
