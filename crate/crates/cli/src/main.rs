//! `etbell`: batch front-end for the energy-time Bell toolkit.
//!
//! Every subcommand writes a JSON report (or an event CSV for streams) to
//! stdout or `--out`, and exits nonzero if any reported check fails.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod cmd;
mod report;

use report::Report;

#[derive(Debug, Parser)]
#[command(name = "etbell", version, about = "Energy-time multiparty Bell test toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Number of parties (or modes, for `network`)
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Levels per party; overrides `--n` for `network` commands
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Trials for event streams
    #[arg(long, global = true, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// RNG seed
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Tolerance for checks; each command has its own default
    #[arg(long, global = true, value_parser = positive_f64)]
    pub tol: Option<f64>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl Common {
    pub fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a positive finite number".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantum Mermin value on GHZ states
    MerminQuantum(cmd::mermin::MerminArgs),
    /// Local hidden-variable models
    Lhv {
        #[command(subcommand)]
        command: cmd::lhv::LhvCommand,
    },
    /// Interferometer networks and analyzers
    Network {
        #[command(subcommand)]
        command: cmd::network::NetworkCommand,
    },
    /// Pulsed two-pair source
    Source {
        #[command(subcommand)]
        command: cmd::source::SourceCommand,
    },
}

/// What a command produced.
pub enum Output {
    Report(Report),
    Csv(Vec<u8>),
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ETBELL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("ETBELL_THREADS={v:?} is not a thread count"))?;
        if n == 0 {
            bail!("ETBELL_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    let common = &cli.common;
    let output = match cli.command {
        Command::MerminQuantum(args) => cmd::mermin::run(common, &args)?,
        Command::Lhv { command } => cmd::lhv::run(common, &command)?,
        Command::Network { command } => cmd::network::run(common, &command)?,
        Command::Source { command } => cmd::source::run(common, &command)?,
    };
    let (bytes, pass) = match output {
        Output::Report(r) => {
            if common.format == Format::Csv {
                bail!("--format csv is only available for event streams");
            }
            (r.to_json().into_bytes(), r.passed())
        }
        Output::Csv(b) => (b, true),
    };
    match &common.out {
        Some(path) => fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("etbell: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("etbell: {e:#}");
            ExitCode::from(2)
        }
    }
}
