//! `gwprof`: infer home-network device categories from gateway telemetry.
//!
//! Subcommands cover every pipeline stage (synth, ingest, label, extract,
//! analyze, train, sweep, rules) plus `pipeline`, which runs them end to end
//! from a shared config with deterministic seeding.

mod pipeline;
mod stages;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit code for configuration problems.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for a failed pipeline stage.
pub const EXIT_STAGE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl CliError {
    pub fn stage(stage: &'static str, cause: impl std::fmt::Display) -> CliError {
        CliError::Stage {
            stage,
            cause: cause.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gwprof",
    version,
    about = "Behavioral device-category inference from home-gateway telemetry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-home trace corpus with known ground truth.
    Synth(SynthArgs),
    /// Parse a trace file into device timelines and apply population filters.
    Ingest(IngestArgs),
    /// Derive conservative ground-truth labels from static descriptors.
    Label(LabelArgs),
    /// Extract the 92-feature behavioral fingerprint per device.
    Extract(ExtractArgs),
    /// Skew audit, log rescaling, PCA variance audit and CFS ranking.
    Analyze(AnalyzeArgs),
    /// Train and cross-validate a classifier.
    Train(TrainArgs),
    /// Re-run classification across activity-day thresholds.
    Sweep(SweepArgs),
    /// Induce one human-readable conjunctive rule per class.
    Rules(RulesArgs),
    /// Run every stage in dependency order from a shared config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Profile set JSON; built-in home-like mix when omitted.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 240)]
    homes: usize,
    #[arg(long, default_value_t = 90)]
    days: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for trace.jsonl and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Trace file (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    /// Minimum distinct active days for a device to be kept.
    #[arg(long, default_value_t = 3)]
    min_days: u32,
    /// Binary timeline store for the kept population.
    #[arg(long)]
    out: PathBuf,
    /// Population census JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
pub struct LabelArgs {
    #[arg(long)]
    timelines: PathBuf,
    /// Ruleset JSON; built-in starter dictionary when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    timelines: PathBuf,
    /// Session gap: silence that terminates a session, minutes.
    #[arg(long, default_value_t = 15)]
    session_gap_mins: u32,
    /// Feature matrix CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Extreme-value factor for the skew detector.
    #[arg(long, default_value_t = 6.0)]
    evf: f64,
    /// CFS subset sizes to rank, comma separated.
    #[arg(long, default_value = "10,20")]
    cfs_k: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_parser = ["coarse", "fine"], default_value = "coarse")]
    granularity: String,
    #[arg(long, value_parser = ["zeror", "cart", "svm"], default_value = "svm")]
    model: String,
    /// "none" or "default" (exhaustive grid with nested CV).
    #[arg(long, value_parser = ["none", "default"], default_value = "none")]
    grid: String,
    /// "off" or "top:N" to append OUI indicator columns.
    #[arg(long, default_value = "off")]
    oui: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 6.0)]
    evf: f64,
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[arg(long, default_value_t = false)]
    prune: bool,
    /// Trained model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cross-validation report JSON.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    timelines: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Thresholds: "1..30" or a comma list like "1,2,4,8".
    #[arg(long, default_value = "1,2,4,8,16,30")]
    thresholds: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 6.0)]
    evf: f64,
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct RulesArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_parser = ["coarse", "fine"], default_value = "fine")]
    granularity: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 6.0)]
    evf: f64,
    /// Rules JSON; a Markdown table goes to stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Homes to synthesize (overrides the config).
    #[arg(long)]
    homes: Option<usize>,
    /// Days to synthesize (overrides the config).
    #[arg(long)]
    days: Option<u32>,
    /// Skip the data-sufficiency sweep.
    #[arg(long, default_value_t = false)]
    no_sweep: bool,
    /// Skip grid search (the default; pass --grid to enable).
    #[arg(long, default_value_t = false)]
    grid: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => stages::run_synth(&args),
        Command::Ingest(args) => stages::run_ingest(&args),
        Command::Label(args) => stages::run_label(&args),
        Command::Extract(args) => stages::run_extract(&args),
        Command::Analyze(args) => stages::run_analyze(&args),
        Command::Train(args) => stages::run_train(&args),
        Command::Sweep(args) => stages::run_sweep(&args),
        Command::Rules(args) => stages::run_rules(&args),
        Command::Pipeline(args) => pipeline::run_pipeline_command(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("gwprof: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e @ CliError::Stage { .. }) => {
            eprintln!("gwprof: {e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
