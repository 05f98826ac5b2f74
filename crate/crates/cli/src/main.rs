mod commands;
mod config;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nft_audit::lof::Reachability;
use nft_audit::wash_audit::SuspicionRule;

/// NFT market statistics and wash-trading audit.
#[derive(Debug, Parser)]
#[command(name = "nft-audit", version)]
pub struct Cli {
    /// TOML config file; flags and environment variables take precedence.
    #[arg(long, global = true, env = "NFT_AUDIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = "NFT_AUDIT_JOBS")]
    pub jobs: Option<usize>,
    /// Log progress and print the resolved configuration.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download sales from the explorer API into a corpus.
    Ingest(IngestArgs),
    /// Volume, activity, Lorenz/Gini and holder-concentration tables.
    Stats(StatsArgs),
    /// Per-collection wash-trading reports and market aggregates.
    Audit(AuditArgs),
    /// Generate a synthetic corpus with labelled wash rings.
    Simulate(SimulateArgs),
    /// Score an audit against a simulated corpus's ground truth.
    Evaluate(EvaluateArgs),
    /// Merge CSV and JSON outputs from one or more directories into one summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// API base URL, e.g. https://explorer.example/api/
    #[arg(long, env = "NFT_AUDIT_API_URL")]
    pub base_url: Option<String>,
    /// Window start (inclusive), RFC 3339 or YYYY-MM-DD.
    #[arg(long)]
    pub window_start: Option<String>,
    /// Window end (exclusive).
    #[arg(long)]
    pub window_end: Option<String>,
    #[arg(long)]
    pub page_size: Option<u32>,
    /// Length of each request sub-window.
    #[arg(long)]
    pub window_step_hours: Option<u32>,
    /// Requests per second across all workers.
    #[arg(long)]
    pub rate_limit: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Restrict to these collections (repeatable).
    #[arg(long = "collection")]
    pub collections: Vec<String>,
    /// Output directory, or a `.jsonl` file for sales only.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus directory or `.jsonl` file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Either,
    Both,
}

impl From<RuleArg> for SuspicionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Either => SuspicionRule::Either,
            RuleArg::Both => SuspicionRule::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReachabilityArg {
    Neighbor,
    Query,
}

impl From<ReachabilityArg> for Reachability {
    fn from(r: ReachabilityArg) -> Self {
        match r {
            ReachabilityArg::Neighbor => Reachability::Neighbor,
            ReachabilityArg::Query => Reachability::Query,
        }
    }
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// LOF neighbourhood size.
    #[arg(long, env = "NFT_AUDIT_K")]
    pub k: Option<usize>,
    /// Addresses with LOF above this are flagged (`inf` flags nothing).
    #[arg(long, env = "NFT_AUDIT_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Which flagged parties make a trade suspicious.
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    #[arg(long, value_enum)]
    pub reachability: Option<ReachabilityArg>,
    /// Skip collections with fewer trading addresses.
    #[arg(long)]
    pub min_addresses: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; missing fields take defaults.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, env = "NFT_AUDIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory written by `audit`.
    #[arg(long)]
    pub audit_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directories holding `stats`, `audit` or `evaluate` outputs (repeatable).
    #[arg(long = "from", required = true)]
    pub from: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Usage failures exit 2, data failures exit 1.
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .with_max_level(if cli.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::WARN
        })
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: invalid configuration: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
