//! Command-line driver: curves, tables, codec simulation and lemma checks for
//! one experiment configuration.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, CliResult, CurveKind, Output};
use config::ConfigError;

#[derive(Parser)]
#[command(name = "privregion", version, about = "Rate, distortion and privacy-leakage trade-offs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Replaces the curve's distortion grid by 0, F, 2F, ...
    #[arg(long, global = true, value_name = "F")]
    grid_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion (rd) or minimum-leakage (ld) curve per case, as CSV.
    Curve {
        #[arg(long, value_enum)]
        kind: CurveKind,
    },
    /// Minimum leakage and the smallest rate attaining it, per case and D, as CSV.
    Table,
    /// Random-code simulation over the configured blocklengths, as JSON.
    Simulate,
    /// Typical-set lemma checks, convexity and inclusion, as JSON.
    Verify,
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read(msg) => CliError::Config(vec![msg]),
            ConfigError::Invalid(list) => CliError::Config(list),
        }
    }
}

fn run(cli: &Cli) -> CliResult<Output> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["--config is required".into()]))?;
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.verify.seed = seed;
        if let Some(sim) = cfg.simulation.as_mut() {
            sim.seed = seed;
        }
    }
    let exp = config::validate(cfg)?;
    match &cli.command {
        Command::Curve { kind } => {
            let grid = match cli.grid_step {
                Some(step) => commands::stepped_grid(&exp, step)?,
                None => exp.config.d_grid.clone(),
            };
            commands::curve(&exp, *kind, &grid)
        }
        Command::Table => commands::table(&exp, exp.table_list()),
        Command::Simulate => commands::simulate(&exp),
        Command::Verify => commands::verify(&exp),
    }
}

fn emit(cli: &Cli, text: &str) -> CliResult<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write to standard output: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: cannot start {n} worker threads");
            return ExitCode::from(2);
        }
    }
    let result = run(&cli).and_then(|out| emit(&cli, &out.text).map(|_| out.unconverged));
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: some solves stopped before their convergence certificate (status not_converged)");
            ExitCode::from(4)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
