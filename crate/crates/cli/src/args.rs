use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gap", version, about = "Fragment puzzle datasets, solvers and metrics")]
pub struct Cli {
    /// JSON object of flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Upper bound on worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download public-domain images and metadata from the Met collection.
    Fetch(FetchArgs),
    /// Sample procedural fragment masks, or import and clean external ones.
    Masks(MasksArgs),
    /// Build a puzzle dataset with train/val/test splits.
    Generate(GenerateArgs),
    /// Shape feature table for a set of masks or puzzle pieces.
    Features(FeaturesArgs),
    /// Compare real and synthetic fragment shape distributions.
    StatsCompare(StatsCompareArgs),
    /// Solve every puzzle in a dataset split.
    Solve(SolveArgs),
    /// Fit the linear flow scorer on a dataset split.
    TrainScorer(TrainArgs),
    /// Score solution files against ground truth.
    Eval(EvalArgs),
    /// Composite scrambled and solved layouts of one puzzle.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of images to store.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Text file of object ids, one per line (default: the full listing).
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Attempts per request, including the first.
    #[arg(long, default_value_t = 4)]
    pub retries: usize,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    /// Concurrent downloads; `--workers` is used when unset, else 20.
    #[arg(long)]
    pub fetch_workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MasksArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 128)]
    pub side: usize,
    /// Directory of raw mask images to clean and validate instead of sampling.
    #[arg(long)]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskKind {
    Procedural,
    Square,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Canvas side in pixels (default: 384 for k=3, 640 for k=5, else 128k).
    #[arg(long)]
    pub canvas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source images (default: synthetic smooth gradients).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MaskKind::Procedural)]
    pub masks: MaskKind,
    /// Directory of prepared mask PNGs; overrides `--masks`.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.15, 0.15])]
    pub splits: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Directory searched recursively for mask or piece PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsCompareArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Output directory for the JSON report and scatter plot.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Greedy,
    Ga,
    Flow,
    Random,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Greedy => "greedy",
            SolverKind::Ga => "ga",
            SolverKind::Flow => "flow",
            SolverKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Oracle,
    Neighbor,
    Linear,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Oracle => "oracle",
            ScorerKind::Neighbor => "neighbor",
            ScorerKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Dataset root written by `generate`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split to solve; all splits when omitted.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, value_enum)]
    pub solver: SolverKind,
    /// Position scorer for the flow solver.
    #[arg(long, value_enum, default_value_t = ScorerKind::Neighbor)]
    pub scorer: ScorerKind,
    /// Trained parameters for the linear scorer.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// JSON file of genetic algorithm settings.
    #[arg(long)]
    pub ga_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for compatibility tables reused across runs.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Record wall-clock time per puzzle (makes outputs run-dependent).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON for the trained parameters.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of solution JSON files from `solve`.
    #[arg(long)]
    pub solutions: PathBuf,
    /// Label for the chart.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Puzzle manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Solution JSON; the ground truth is shown when omitted.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
