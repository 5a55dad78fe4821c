mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::Parser;
use harness_core::verify::summary_table;

use crate::commands::{dispatch, Context};
use crate::config::{CliError, Command};
use crate::output::ArtifactWriter;

/// Config-driven experiments for the harness process with external data.
#[derive(Debug, Parser)]
#[command(name = "harness", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a scalar leaf of the config, e.g. `--set run.seed=3`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

fn workers(configured: Option<usize>) -> Result<usize> {
    match std::env::var("HARNESS_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(format!("HARNESS_WORKERS must be a positive integer, got `{v}`")).into()),
        Err(_) => Ok(configured.unwrap_or(0)),
    }
}

/// Returns whether every check passed.
fn run(cli: &Cli) -> Result<bool> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", cli.config.display())))?;
    let (doc, cfg) = config::load(&text, &cli.set)?;
    if let Some(c) = cfg.command {
        if c != cli.command {
            return Err(CliError::config(format!(
                "config is for `{}` but `{}` was requested",
                c.name(),
                cli.command.name()
            ))
            .into());
        }
    }
    let n = workers(cfg.run.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .context("cannot start worker pool")?;
    let inst = cfg.instance()?;
    let mut out = ArtifactWriter::new(&cfg.output.directory)?;
    let reports = pool.install(|| {
        let mut ctx = Context {
            cfg: &cfg,
            inst,
            out: &mut out,
        };
        dispatch(cli.command, &mut ctx)
    })?;

    if !reports.is_empty() {
        let lines: Vec<String> = reports.iter().map(|r| r.to_json_line()).collect();
        out.jsonl("reports.jsonl", &lines)?;
        print!("{}", summary_table(&reports));
    }
    out.manifest(cli.command.name(), &doc, pool.current_num_threads())?;

    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(true)
    } else {
        eprintln!("error: {}", CliError::CheckFailed(failed.join(", ")));
        Ok(false)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
