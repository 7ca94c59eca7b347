//! `agr` subcommands. Exit codes: 0 success, 1 failed checks or runtime
//! error, 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use agr_core::verify::{run_suite_with, Agr, Suite, TrialConfig};
use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::bench_overhead;
use crate::config::ExperimentConfig;
use crate::data::{generate_blobs, generate_moons, write_csv_dataset, BlobsParams, MoonsParams};
use crate::train::{run_experiment, write_outputs};
use crate::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "agr", version, about = "Adaptive gradient regularization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from an experiment file and write JSONL records.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train every seed with AGR on and off from the same start.
        #[arg(long)]
        paired: bool,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Records file; defaults to the config's `out`, else `runs/<name>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property and finite-difference checks.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time training steps with AGR off and on.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Blobs,
    Moons,
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(e: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

pub fn execute(command: Command, out: &mut impl Write) -> Result<i32> {
    match command {
        Command::Train { config, paired, repeats, out: out_path } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = out_path
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}.jsonl", cfg.name)));
            let result = run_experiment(&cfg, paired, repeats)?;
            let written = write_outputs(&result, &path)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&result.summary)?).map_err(stdout_err)?;
            for p in written {
                writeln!(out, "wrote {}", p.display()).map_err(stdout_err)?;
            }
            Ok(0)
        }
        Command::Verify { suite, trials, seed, report } => {
            let suite: Suite = suite.parse()?;
            let cfg = TrialConfig::default().with_trials(trials).with_seed(seed);
            let result = run_suite_with(&cfg, suite, &Agr)?;
            let json = serde_json::to_string_pretty(&result.to_json())?;
            match &report {
                Some(path) => std::fs::write(path, json + "\n").map_err(io(path))?,
                None => writeln!(out, "{json}").map_err(stdout_err)?,
            }
            for c in &result.checks {
                let status = match (c.passed(), c.informational) {
                    (_, true) => "INFO",
                    (true, false) => "PASS",
                    (false, false) => "FAIL",
                };
                eprintln!(
                    "{status} {:<42} trials={:<6} failures={:<5} worst_margin={:.3e}",
                    c.name, c.trials, c.failures, c.worst_margin
                );
            }
            Ok(if result.passed() { 0 } else { 1 })
        }
        Command::Bench { config, steps } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = bench_overhead(&cfg, steps)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(stdout_err)?;
            Ok(0)
        }
        Command::GenData { kind, n, classes, dim, spread, noise, seed, label_column, out: path } => {
            let ds = match kind {
                DataKind::Blobs => generate_blobs(&BlobsParams { n, classes, dim, spread, seed })?,
                DataKind::Moons => generate_moons(&MoonsParams { n, noise, seed })?,
            };
            write_csv_dataset(&ds, &path, &label_column)?;
            writeln!(out, "wrote {} rows to {}", ds.len(), path.display()).map_err(stdout_err)?;
            Ok(0)
        }
    }
}
