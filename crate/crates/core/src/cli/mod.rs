//! Operator entry points: `train`, `evaluate`, `rollout` and `verify`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 verification failure.

mod commands;
mod config;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_rollout, cmd_train, cmd_verify, EvaluateSummary, RolloutSummary, TrainSummary};
pub use config::{apply_config_text, load_config, ConfigError, RunSettings};

use crate::vlearn::PolicyKind;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(#[from] Error),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// A robot policy by name: the ORCA baseline or a learned network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicySelector {
    Orca,
    Learned(PolicyKind),
}

impl PolicySelector {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySelector::Orca => "ORCA",
            PolicySelector::Learned(k) => k.name(),
        }
    }
}

impl FromStr for PolicySelector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("orca") {
            return Ok(PolicySelector::Orca);
        }
        s.parse()
            .map(PolicySelector::Learned)
            .map_err(|_| format!("unknown policy `{s}` (ORCA, CADRL-MLP, LSTMRL, CAMRL)"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "camrl", about = "Crowd-aware robot navigation: train, evaluate, roll out, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Imitation learning then RL; writes a checkpoint and a JSONL log.
    Train(TrainArgs),
    /// Runs the test protocol and writes results plus a comparison table.
    Evaluate(EvaluateArgs),
    /// Writes the trajectory log of one seeded episode.
    Rollout(RolloutArgs),
    /// Runs the invariant suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Learned policy to train (overrides `net.kind`).
    #[arg(long)]
    pub policy: Option<PolicySelector>,
    /// Resume from this checkpoint instead of initialising.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Policies to evaluate; learned ones are matched to checkpoints by kind.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<PolicySelector>,
    /// Learned-policy checkpoints (repeatable).
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Comma-separated environments; all six by default.
    #[arg(long, value_delimiter = ',')]
    pub envs: Vec<String>,
    /// `orca`, `sfm` or `both`.
    #[arg(long, default_value = "both")]
    pub crowd_model: String,
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    #[arg(long, default_value = "runs/eval")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "ORCA")]
    pub policy: PolicySelector,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A single environment.
    #[arg(long, default_value = "baseline-circle")]
    pub envs: String,
    #[arg(long, default_value = "orca")]
    pub crowd_model: String,
    /// Trajectory log path.
    #[arg(long, default_value = "rollout.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run only these suites (repeatable); all by default.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a).map(|s| println!("{}", s.describe())),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|s| print!("{}", s.table.render())),
        Command::Rollout(a) => cmd_rollout(&a).map(|s| println!("{}", s.describe())),
        Command::Verify(a) => cmd_verify(&a, &verify::VerifyOps::default()).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
