//! `mib`: run experiment configs, property suites and message counts.
//!
//! Exit codes: 0 success, 1 invalid input, 2 safety violation or failed
//! property, 3 liveness failure.

mod check;
mod config;
mod count;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};
use error::{CliError, EXIT_INVALID, EXIT_OK, EXIT_SAFETY};

#[derive(Debug, Parser)]
#[command(
    name = "mib",
    version,
    about = "Deterministic simulator for the MiB consensus family"
)]
struct Cli {
    /// Overrides the seeds of `run` or the base seed of `check` and `count`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Event budget per simulated run.
    #[arg(long, global = true, env = "MIB_EVENT_CAP")]
    event_cap: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (protocol, fault mode, seed) cell of an experiment config.
    Run { config: PathBuf },
    /// Run property suites: coding, rbc, aba, acs, determinism or all.
    Check {
        #[arg(default_value = "all")]
        scope: String,
    },
    /// Print analytic failure-free message counts per RBC variant.
    Count {
        /// Protocol name or RBC variant (avid, mbc, avid-l, mbc-l).
        #[arg(long)]
        protocol: String,
        #[arg(long, conflicts_with = "f", required_unless_present = "f")]
        n: Option<usize>,
        #[arg(long)]
        f: Option<usize>,
        /// Also simulate each variant and compare.
        #[arg(long)]
        measure: bool,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<i32, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = config::Seeds::List(vec![seed]);
    }
    let mut sims = cfg.expand()?;
    if let Some(cap) = cli.event_cap {
        sims.iter_mut().for_each(|s| s.event_cap = cap);
    }
    let records = run::run_matrix(&sims);
    let format = cli.format.unwrap_or(cfg.output.format);
    let out = cli.out.as_deref().or(cfg.output.path.as_deref());
    emit(out, &run::render(&records, format))?;
    if let Some(path) = out {
        // The effective config, so a result file can be reproduced.
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".config.toml");
        emit(Some(Path::new(&sidecar)), &cfg.to_toml())?;
    }
    let summary = run::summary(&records);
    if out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(run::exit_code(&records))
}

fn cmd_check(cli: &Cli, scope: &str) -> Result<i32, CliError> {
    let results = check::check(scope, cli.seed.unwrap_or(0))?;
    emit(cli.out.as_deref(), &check::render(&results))?;
    Ok(if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_SAFETY
    })
}

fn cmd_count(
    cli: &Cli,
    protocol: &str,
    n: Option<usize>,
    f: Option<usize>,
    measure: bool,
) -> Result<i32, CliError> {
    let report = count::count(protocol, n, f, measure)?;
    emit(cli.out.as_deref(), &count::render(&report, cli.format))?;
    Ok(if report.rows.iter().all(count::CountRow::matches) {
        EXIT_OK
    } else {
        EXIT_SAFETY
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INVALID as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Check { scope } => cmd_check(&cli, scope),
        Command::Count {
            protocol,
            n,
            f,
            measure,
        } => cmd_count(&cli, protocol, *n, *f, *measure),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID as u8)
        }
    }
}
