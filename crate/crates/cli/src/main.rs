//! `confcl` command-line tool.
//!
//! Every command validates its inputs first, writes output files atomically
//! and reports failures as a single JSON object on stderr (exit 1). Usage
//! errors print clap's usage text and exit 2.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use confcl::synth_bench::StudyVariant;

#[derive(Parser)]
#[command(name = "confcl", version, about = "Confidence-weighted conditional contrastive learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metadata CSV -> kernel matrix CSV over the labeled exams.
    Kernel(KernelArgs),
    /// Embedding batch + metadata -> loss breakdown JSON.
    Loss(LossArgs),
    /// Compare analytic and finite-difference gradients on a batch.
    Gradcheck(GradcheckArgs),
    /// Probability volumes + reference masks -> detection metrics.
    EvalDetect(EvalDetectArgs),
    /// Run the synthetic ablation study from a config file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Global,
    Conditional,
    Decoupled,
}

fn parse_variant(s: &str) -> Result<StudyVariant, String> {
    s.parse().map_err(|e: confcl::Error| e.to_string())
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (id, value) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected exam_id=epsilon, got {s:?}"))?;
    let value: f64 = value.parse().map_err(|_| format!("not a number: {value:?}"))?;
    Ok((id.to_string(), value))
}

#[derive(Args, Clone)]
struct ConfidenceArgs {
    /// Confidence assigned to single-vote exams.
    #[arg(long, default_value_t = confcl::metadata_kernel::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Per-exam epsilon, e.g. `--epsilon-override exam7=1.0`. Repeatable.
    #[arg(long = "epsilon-override", value_parser = parse_override)]
    epsilon_overrides: Vec<(String, f64)>,
    /// Set epsilon to 1 for exams whose votes all come from this source.
    #[arg(long)]
    biopsy_source: Option<String>,
    /// proposed, hc, majority, biopsy, glu or unsupervised.
    #[arg(long, default_value = "proposed", value_parser = parse_variant)]
    variant: StudyVariant,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[command(flatten)]
    confidence: ConfidenceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EmbeddingInput {
    /// `EMB1` binary batch.
    #[arg(long, conflicts_with_all = ["first", "second"])]
    embeddings: Option<PathBuf>,
    /// First view as headerless CSV (requires --second).
    #[arg(long, requires = "second")]
    first: Option<PathBuf>,
    #[arg(long, requires = "first")]
    second: Option<PathBuf>,
    /// Exam id of each embedding row, one per line (default: the row index).
    #[arg(long)]
    ids: Option<PathBuf>,
}

#[derive(Args)]
struct LossArgs {
    #[command(flatten)]
    input: EmbeddingInput,
    #[arg(long)]
    metadata: PathBuf,
    #[command(flatten)]
    confidence: ConfidenceArgs,
    #[arg(long, value_enum, default_value = "decoupled")]
    objective: ObjectiveArg,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Batch size of the random batch.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Embedding dimension of the random batch.
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check a batch from files instead of a random one.
    #[command(flatten)]
    input: EmbeddingInput,
    /// Metadata for a file batch (random votes are drawn otherwise).
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[command(flatten)]
    confidence: ConfidenceArgs,
    #[arg(long, value_enum, default_value = "decoupled")]
    objective: ObjectiveArg,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalDetectArgs {
    /// `VOL1` probability volume. Repeat once per exam.
    #[arg(long = "volume", required = true)]
    volumes: Vec<PathBuf>,
    /// `MSK1` reference mask, in the same order as --volume.
    #[arg(long = "mask", required = true)]
    masks: Vec<PathBuf>,
    /// Fixed threshold; the dynamic schedule is used when omitted.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    t_start: f64,
    #[arg(long, default_value_t = 0.1)]
    t_min: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 5)]
    max_candidates: usize,
    #[arg(long, default_value_t = 10)]
    min_voxels: usize,
    /// 6, 18 or 26.
    #[arg(long, default_value = "26")]
    connectivity: String,
    /// A candidate matches when its IoU with a reference lesion exceeds this.
    #[arg(long, default_value_t = confcl::detection_metrics::DEFAULT_OVERLAP_THRESHOLD)]
    overlap: f64,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_seeds")]
    seeds: Vec<u64>,
    /// Use seeds 0..N.
    #[arg(long, default_value_t = 10)]
    n_seeds: u64,
    /// Comma-separated variant list (default: all six).
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<StudyVariant>,
    /// Worker threads; falls back to CONFCL_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-variant mean/std table as CSV.
    #[arg(long)]
    summary_csv: Option<PathBuf>,
    /// One CSV row per (variant, seed) cell.
    #[arg(long)]
    cells_csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kernel(a) => commands::kernel(a),
        Command::Loss(a) => commands::loss(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::EvalDetect(a) => commands::eval_detect(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
