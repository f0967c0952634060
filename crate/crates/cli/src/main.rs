mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saliency_core::report::Metric;
use saliency_core::LossId;

#[derive(Parser)]
#[command(name = "saliency", version, about = "Saliency evaluation, loss checks and dataset protocols")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: saliency-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score prediction directories against a ground-truth directory.
    Eval(EvalArgs),
    /// Rank methods from their summary CSVs.
    Compare(CompareArgs),
    /// Per-metric drop from a normal to a hard evaluation.
    Drop(DropArgs),
    /// Finite-difference check of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Near-duplicate search over a manifest, with optional review votes.
    Dedup(DedupArgs),
    /// Write a split specification.
    Split(SplitArgs),
    /// Train the per-pixel logistic model on synthetic scenes.
    DemoTrain(TrainArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction directories, one method each.
    #[arg(long = "pred", num_args = 1..)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Method name (only with a single prediction directory).
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_enum)]
    resize: Option<ResizeArg>,
    #[arg(long)]
    skip_unpaired: bool,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    #[arg(long)]
    gt_threshold: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResizeArg {
    Error,
    Nearest,
}

#[derive(Args)]
struct CompareArgs {
    /// Summary CSVs written by `eval`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Args)]
struct DropArgs {
    normal: PathBuf,
    hard: PathBuf,
    /// Restrict to one method present in both files.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<LossId>>,
    /// Number of seeds, counted up from --seed.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Scale one analytic gradient component; the check should then fail.
    #[arg(long)]
    corrupt: Option<f64>,
}

#[derive(Args)]
struct DedupArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Precomputed descriptors (id, v0, v1, ...); default embeds the images.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Directory image paths are relative to (default: the manifest's).
    #[arg(long)]
    base_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Review votes (id_a, id_b, votes); writes the cleaned manifest.
    #[arg(long)]
    review: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(value_enum)]
    kind: SplitKind,
    #[arg(long)]
    manifest: PathBuf,
    /// Objectness scores (id, score), overriding the manifest's.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Standard split JSON whose train partition seeds the few-shot subsets.
    #[arg(long)]
    train_from: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitKind {
    Standard,
    Objectness,
    Fewshot,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<LossId>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    no_line_search: bool,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    heldout_size: Option<usize>,
}

/// Exit 1 for bad invocations and configuration, 2 for bad data or a
/// failed check.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data(_) => "data",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) => m,
        }
    }
}

impl From<saliency_core::Error> for Failure {
    fn from(e: saliency_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn report(f: &Failure) -> ExitCode {
    let line = serde_json::json!({ "error": f.kind(), "code": f.code(), "message": f.message() });
    eprintln!("{line}");
    ExitCode::from(f.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first).to_string();
            return report(&Failure::Usage(msg));
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
