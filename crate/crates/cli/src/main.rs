//! `ccrr`: simulate connectivity data, fit reduced-rank bases, embed, test
//! group differences, and rerun the simulation studies.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ccrr_core::experiments::Scale;

/// Exit code for numeric failures.
const EXIT_NUMERIC: u8 = 1;
/// Exit code for usage, configuration and path errors.
const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl From<ccrr_core::Error> for CliError {
    fn from(e: ccrr_core::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ccrr", version, about = "Continuous connectivity reduced-rank analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit a reduced-rank basis to a dataset.
    Fit(FitArgs),
    /// Embed the subjects of a dataset with a fitted model.
    Embed(EmbedArgs),
    /// Two-group tests on the scores of a fitted model.
    Test {
        #[command(subcommand)]
        kind: TestKind,
    },
    /// Rerun one of the simulation studies.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scenario {
    Rank1,
    Twogroup,
}

#[derive(Args, Debug)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration field, `key=value` (value parsed as JSON).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of components.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// `none`, `auto`, or the number of coefficients to keep.
    #[arg(long)]
    pub sparsity: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Model output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum TestKind {
    /// MMD permutation test on the score vectors.
    Global(TestArgs),
    /// Per-component tests with Holm correction and the subnetwork cover.
    Local(TestArgs),
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset that supplies the group labels.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of permutations.
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Study {
    Sim61,
    Sim62,
    Sim63,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub study: Study,
    #[arg(long, value_enum, default_value = "small")]
    pub scale: ScaleArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScaleArg {
    Small,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Small => Scale::Small,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

/// Size the global worker pool from `CCRR_THREADS`.
fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("CCRR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CCRR_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Test { kind: TestKind::Global(a) } => commands::test_global(&a),
        Command::Test { kind: TestKind::Local(a) } => commands::test_local(&a),
        Command::Reproduce(a) => commands::reproduce(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
