use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use untangle_core::classifier::{ModelKind, TrainConfig};
use untangle_core::prompt::PromptVariant;

#[derive(Debug, Parser)]
#[command(name = "untangle", version, about = "Method-level commit untangling toolkit")]
pub struct Cli {
    /// TOML file with optional [llm], [embed], [train], [goldset],
    /// [readability] and [mining] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Run every batch stage on a single thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract method-level changes from a git repository.
    Mine(MineArgs),
    /// Build the labeled gold set from mined changes and human annotations.
    Goldset(GoldsetArgs),
    /// Serve the annotation API (and optionally the annotator UI).
    Serve(ServeArgs),
    /// Classify labeled changes with an LLM, per prompt variant.
    ClassifyLlm(ClassifyArgs),
    /// Embed changes into fixed-size vectors.
    Embed(EmbedArgs),
    /// Train a classifier on embeddings with a stratified hold-out split.
    Train(TrainArgs),
    /// Evaluate a saved model, or run leave-one-out with --loo.
    Eval(EvalArgs),
    /// Build noisy and less-noisy partitions and compare their separability.
    Denoise(DenoiseArgs),
    /// Compute code metrics for the first version of every method.
    Metrics(MetricsArgs),
    /// Rank-sum test and Cliff's delta between two metric tables.
    Stats(StatsArgs),
    /// Summarize stage outputs in a directory as markdown.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MineArgs {
    /// Path to the git repository.
    #[arg(long)]
    pub repo: PathBuf,
    /// Output JSONL of method changes.
    #[arg(long)]
    pub out: PathBuf,
    /// Bug-fix message regex (repeatable); replaces the defaults.
    #[arg(long = "bugfix-pattern", value_name = "REGEX")]
    pub bugfix_patterns: Vec<String>,
    /// File extension handed to the parser (repeatable).
    #[arg(long = "ext", value_name = "EXT")]
    pub extensions: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct GoldsetArgs {
    /// Mined method changes (JSONL).
    #[arg(long)]
    pub changes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: FormatArg,
    /// Upper bound on sampled NotBuggy changes.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum age of a never-fixed method to count as NotBuggy.
    #[arg(long)]
    pub min_age_days: Option<i64>,
    /// Unix time ages are measured at (default: newest change).
    #[arg(long)]
    pub reference_time: Option<i64>,
    /// Annotation store whose resolved human labels override automated ones.
    #[arg(long, value_name = "DIR")]
    pub annotations: Option<PathBuf>,
    /// Also report Cohen's kappa between two raters: A,B.
    #[arg(long, value_name = "A,B", requires = "annotations")]
    pub kappa: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Changes to annotate (JSONL), in queue order.
    #[arg(long)]
    pub changes: PathBuf,
    /// Directory holding the label log and snapshot.
    #[arg(long, value_name = "DIR")]
    pub store: PathBuf,
    /// Listen address; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Built annotator UI, served at `/`.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderArg {
    Openai,
    Gemini,
    Mock,
}

/// Model selection shared by every stage that queries an LLM.
#[derive(Debug, Args, Serialize)]
pub struct LlmArgs {
    /// Model id; `mock` selects the offline responder table.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Responder table (JSONL of prompt_sha256/response) for the mock model.
    #[arg(long, value_name = "FILE")]
    pub responder: Option<PathBuf>,
    /// Persistent response cache directory.
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub requests_per_second: Option<f64>,
    /// Directory overriding the prompt templates, `instructions.toml` and
    /// `examples.json`.
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// Labeled dataset (JSONL from `goldset`).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Prompt variant (repeatable; default: all five).
    #[arg(long = "variant")]
    pub variants: Vec<PromptVariant>,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// Verdict rows (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics per variant (JSON); the same document goes to stdout.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedProviderArg {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RemoteApiArg {
    Openai,
    Gemini,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    /// Labeled (goldset) or unlabeled (mine) changes, JSONL.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub provider: Option<EmbedProviderArg>,
    #[arg(long)]
    pub model_id: Option<String>,
    /// Encoder context size in tokens; longer inputs are pooled over windows.
    #[arg(long)]
    pub token_limit: Option<usize>,
    #[arg(long, value_enum)]
    pub remote_api: Option<RemoteApiArg>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Embedding cache (JSONL).
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden_units = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.l2 {
            cfg.l2 = v;
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Labeled embeddings (JSONL from `embed`).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, default_value = "mlp")]
    pub kind: ModelKind,
    /// Model artifact (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Share of items used for training; 1 trains on everything.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Hold-out evaluation report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Labeled embeddings (JSONL from `embed`).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Saved model to score.
    #[arg(long, required_unless_present = "loo", conflicts_with = "loo")]
    pub model: Option<PathBuf>,
    /// Leave-one-out: retrain once per held-out item.
    #[arg(long)]
    pub loo: bool,
    /// Model kind trained by --loo.
    #[arg(long, default_value = "mlp")]
    pub kind: ModelKind,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Evaluation report with per-item predictions (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DenoiseArgs {
    /// Mined changes of one project as PROJECT=FILE (repeatable).
    #[arg(long = "changes", value_name = "PROJECT=FILE", required = true)]
    pub changes: Vec<String>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub min_age_days: Option<i64>,
    /// Unix time ages are measured at (default: newest change per project).
    #[arg(long)]
    pub reference_time: Option<i64>,
    /// Precomputed verdict rows (JSONL from `classify-llm`).
    #[arg(long, value_name = "FILE", conflicts_with = "model")]
    pub verdicts: Option<PathBuf>,
    /// Prompt variant used for (or selected from) the verdicts.
    #[arg(long, default_value = "fewshot-cot")]
    pub variant: PromptVariant,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// Mined changes of one project as PROJECT=FILE (repeatable).
    #[arg(long = "changes", value_name = "PROJECT=FILE", required = true)]
    pub changes: Vec<String>,
    /// Metrics table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// First sample: CSV with one column per metric.
    #[arg(long, value_name = "FILE")]
    pub a: PathBuf,
    /// Second sample.
    #[arg(long, value_name = "FILE")]
    pub b: PathBuf,
    /// Column to compare (repeatable; default: every metric column present
    /// in both files).
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory of stage outputs.
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
    /// Markdown report.
    #[arg(long)]
    pub out: PathBuf,
}
