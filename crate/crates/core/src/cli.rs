//! Command implementations behind the `dion2` binary.
//!
//! Exit codes: 0 on success, 1 on numerical or invariant failure, 2 on a
//! configuration error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{bench_step_time, write_bench_csv, BenchConfig};
use crate::config::{parse_config, ConfigFile};
use crate::error::{Error, Result};
use crate::trainer::{run, write_reports_csv, RunConfig};
use crate::verify::{run_suites, Level};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dion2",
    version,
    about = "Sparse-orthonormalization optimizers: train, bench, verify"
)]
pub struct Cli {
    /// Override the seed from the config (optimizer seed for `train`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a synthetic task and write the step log.
    Train { config: PathBuf },
    /// Time optimizer steps and write one row per configuration.
    Bench { config: PathBuf },
    /// Run the invariant battery; prints one line per suite.
    Verify {
        #[arg(value_enum)]
        level: VerifyLevel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyLevel {
    Quick,
    Full,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train { config } => {
            let cfg = expect_run(config, parse_config(config)?)?;
            cmd_train(cfg, cli).map(|_| EXIT_OK)
        }
        Command::Bench { config } => {
            let cfg = expect_bench(config, parse_config(config)?)?;
            cmd_bench(cfg, cli).map(|_| EXIT_OK)
        }
        Command::Verify { level } => {
            let level = match level {
                VerifyLevel::Quick => Level::Quick,
                VerifyLevel::Full => Level::Full,
            };
            Ok(cmd_verify(level, cli.seed.unwrap_or(0)))
        }
    }
}

fn expect_run(path: &Path, cfg: ConfigFile) -> Result<RunConfig> {
    match cfg {
        ConfigFile::Run(r) => Ok(r),
        ConfigFile::Bench(_) => Err(Error::Parse {
            path: path.to_path_buf(),
            detail: "expected a training config, found a benchmark config".into(),
        }),
    }
}

fn expect_bench(path: &Path, cfg: ConfigFile) -> Result<BenchConfig> {
    match cfg {
        ConfigFile::Bench(b) => Ok(b),
        ConfigFile::Run(_) => Err(Error::Parse {
            path: path.to_path_buf(),
            detail: "expected a benchmark config, found a training config".into(),
        }),
    }
}

fn output_path(cli: &Cli, configured: Option<&Path>, stem: &str) -> PathBuf {
    match configured {
        Some(p) => cli.out_dir.join(p),
        None => cli.out_dir.join(format!("{stem}.{}", cli.format.ext())),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::Internal(format!("serializing {}: {e}", path.display())))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Trains and writes the step log; returns the path written.
pub fn cmd_train(mut cfg: RunConfig, cli: &Cli) -> Result<PathBuf> {
    if let Some(seed) = cli.seed {
        cfg.optimizer.seed = seed;
    }
    let reports = run(&cfg)?;
    let path = output_path(cli, cfg.log_path.as_deref(), "train");
    match cli.format {
        Format::Csv => {
            let mut out = create(&path)?;
            write_reports_csv(&mut out, &reports)?;
            out.flush()?;
        }
        Format::Json => write_json(&path, &reports)?,
    }
    if let Some(last) = reports.last() {
        println!(
            "{}: {} steps, final train loss {:.6e} -> {}",
            cfg.optimizer.algorithm.name(),
            cfg.total_steps,
            last.train_loss,
            path.display()
        );
    }
    Ok(path)
}

/// Benchmarks and writes the rows; returns the path written.
pub fn cmd_bench(mut cfg: BenchConfig, cli: &Cli) -> Result<PathBuf> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let rows = bench_step_time(&cfg)?;
    let path = output_path(cli, None, "bench");
    match cli.format {
        Format::Csv => {
            let mut out = create(&path)?;
            write_bench_csv(&mut out, &rows)?;
            out.flush()?;
        }
        Format::Json => write_json(&path, &rows)?,
    }
    for r in &rows {
        println!(
            "{:<13} {:>5}x{:<5} alpha={:<6} {:>14.0} ns (std {:.0})",
            r.algorithm, r.rows, r.cols, r.alpha, r.mean_step_ns, r.std_step_ns
        );
    }
    Ok(path)
}

/// Runs the battery, printing one line per suite; 0 iff all pass.
pub fn cmd_verify(level: Level, seed: u64) -> i32 {
    let mut failed = 0;
    for r in run_suites(level, seed) {
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    if failed == 0 {
        println!("all suites passed");
        EXIT_OK
    } else {
        println!("{failed} suite(s) failed");
        EXIT_FAILURE
    }
}
