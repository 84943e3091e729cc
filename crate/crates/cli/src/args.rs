use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "scorpid", version, about = "Scorpion detection/classification pipeline toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assign train/valid/test splits to a manifest.
    Split(SplitArgs),
    /// Write seeded augmented variants, their ledger and the expanded manifest.
    Augment(AugmentArgs),
    /// Evaluate predictions against a manifest and write a report.
    Eval(EvalArgs),
    /// Recover integer confusion matrices from rounded metrics.
    Reconstruct(ReconstructArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Summarize a stored report and re-export its ROC curve.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// train,valid,test fractions summing to 1.
    #[arg(long, default_value = "0.7,0.2,0.1")]
    pub ratios: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apportion each class (or positives/negatives) separately.
    #[arg(long)]
    pub stratify: bool,
    /// Overwrite existing split assignments.
    #[arg(long)]
    pub reassign: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Variants per eligible image.
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 45.0)]
    pub rotate_max_deg: f64,
    #[arg(long, default_value_t = 45.0)]
    pub shear_max_deg: f64,
    #[arg(long, default_value_t = 48.0)]
    pub saturation_pct: f64,
    #[arg(long, default_value_t = 25.0)]
    pub exposure_pct: f64,
    #[arg(long, default_value_t = 1.75)]
    pub blur_px: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_frac: f64,
    #[arg(long, default_value_t = 8)]
    pub max_retries: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Detect,
    Classify,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MatchModeArg {
    Presence,
    PerBox,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Ground-truth manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predictions file (line-delimited detections or class probabilities).
    #[arg(long, conflicts_with = "backend")]
    pub predictions: Option<PathBuf>,
    /// Query a backend instead: `reference:<manifest>:<eps>:<seed>` or a URL.
    #[arg(long)]
    pub backend: Option<String>,
    /// Run the evaluation on a scorpid service (POST /evaluate).
    #[arg(long, conflicts_with = "backend")]
    pub server: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Inclusive score threshold for the headline confusion matrix.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "presence")]
    pub match_mode: MatchModeArg,
    /// auto, all, train, valid or test.
    #[arg(long, default_value = "auto")]
    pub scope: String,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Binary,
    Multi,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long, value_enum, default_value = "binary")]
    pub kind: Kind,
    /// accuracy,precision,recall,f_measure for `--kind binary`. Each value is a
    /// decimal, `*` (unconstrained) or `undef` (0/0).
    #[arg(long, allow_hyphen_values = true)]
    pub metrics: Option<String>,
    /// `LABEL=a,p,r,f` per class for `--kind multi`.
    #[arg(long = "class")]
    pub classes: Vec<String>,
    /// `LABEL=lo..hi` bound on a class's true count.
    #[arg(long = "rows")]
    pub rows: Vec<String>,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value = "0.005")]
    pub tol: String,
    #[arg(long, default_value_t = 50_000_000)]
    pub max_nodes: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_solutions: usize,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "SCORPID_HOST", default_value = "0.0.0.0")]
    pub host: String,
    #[arg(long, env = "SCORPID_PORT", default_value_t = 8080)]
    pub port: u16,
    /// `reference:<manifest>:<eps>:<seed>` or the URL of a remote model runner.
    #[arg(long, env = "SCORPID_BACKEND")]
    pub backend: String,
    /// Sighting log; in-memory when absent.
    #[arg(long, env = "SCORPID_LOG_PATH")]
    pub log_path: Option<PathBuf>,
    #[arg(long, env = "SCORPID_MAX_BODY_BYTES", default_value_t = 16 * 1024 * 1024)]
    pub max_body_bytes: usize,
    #[arg(long, env = "SCORPID_BACKEND_TIMEOUT_MS", default_value_t = 30_000)]
    pub backend_timeout_ms: u64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A report written by `scorpid eval`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}
