use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use motionedit_core::pipeline::EditType;

#[derive(Debug, Parser)]
#[command(
    name = "motionedit",
    version,
    about = "Motion-conditioned video editing: generate data, train, edit, evaluate"
)]
pub struct Cli {
    /// Run configuration (TOML); defaults to $MOTIONEDIT_CONFIG, then built-in defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic moving-shapes corpus and its edit benchmark
    GenData(GenDataArgs),
    /// Train the denoiser on a generated corpus
    Train(TrainArgs),
    /// Edit a video, or every task of a manifest
    Edit(EditArgs),
    /// Score edits against a manifest and write a metric report
    Eval(EvalArgs),
    /// Build a report from precomputed per-method scores
    Report(ReportArgs),
    /// Print the effective run configuration as TOML
    Config,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of source scenes; each yields one task per edit type
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by gen-data
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Directory for checkpoints and the loss log
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Total optimizer steps (a resumed run stops at this step count)
    #[arg(long)]
    pub steps: Option<u64>,
    /// Seed for initialization and batch sampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Clips per optimizer step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Linear learning-rate warmup steps
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Save a checkpoint every N steps (0 disables)
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Trained model checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Source video directory (single-edit mode)
    #[arg(long, value_name = "DIR", conflicts_with = "manifest", requires_all = ["source_prompt", "edit_prompt", "edit_type"])]
    pub video: Option<PathBuf>,
    /// Prompt describing the source video
    #[arg(long)]
    pub source_prompt: Option<String>,
    /// Prompt describing the desired edit
    #[arg(long)]
    pub edit_prompt: Option<String>,
    /// Edit type: style, background, object, motion, multi-spatial, multi-motion
    #[arg(long = "type", value_name = "TYPE")]
    pub edit_type: Option<EditType>,
    /// Edit every task of a benchmark manifest (batch mode)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Method name used for the batch-mode output directory
    #[arg(long, default_value = "ours")]
    pub method: String,
    /// Edit at most this many manifest tasks
    #[arg(long)]
    pub limit: Option<usize>,
    /// Candidate edits per request, ranked by M_geo
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Image guidance scale s_I
    #[arg(long)]
    pub scale_image: Option<f64>,
    /// Text guidance scale s_T
    #[arg(long)]
    pub scale_text: Option<f64>,
    /// Motion guidance scale s_M (forced to 0 for motion edits)
    #[arg(long)]
    pub scale_motion: Option<f64>,
    /// DDIM sampling steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// DDIM stochasticity (0 is deterministic)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Sampling seed; candidate k uses seed + k
    #[arg(long)]
    pub seed: Option<u64>,
    /// First-frame editor: recolor or identity
    #[arg(long, default_value = "recolor")]
    pub editor: String,
    /// Embedding backend for candidate ranking
    #[arg(long, default_value = "oracle")]
    pub backend: String,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Benchmark manifest (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory holding <method>/<task id>/ edited clips
    #[arg(long, value_name = "DIR")]
    pub edits: PathBuf,
    /// Paired human comparisons (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Embedding backend: oracle, frame-average, frame-scores
    #[arg(long, default_value = "oracle")]
    pub backend: String,
    /// Report missing edits instead of failing
    #[arg(long)]
    pub allow_missing: bool,
    /// Report directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-method score table (JSON)
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    /// Paired human comparisons (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Manifest giving each labelled task its edit type
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Report directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
