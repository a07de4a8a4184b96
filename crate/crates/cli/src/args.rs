use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cxreval",
    version,
    about = "Evaluate generated chest X-ray reports"
)]
pub struct Cli {
    /// Random seed (required by `eval` and `study create`)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; output does not depend on this
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Lexicon JSON replacing the bundled one
    #[arg(long, global = true, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the 14-finding label vector from every report
    Label(LabelArgs),
    /// Clean reports with the rule set, or rewrite them through a chat endpoint
    Refine(RefineArgs),
    /// Score predicted reports against ground truth
    Eval(EvalArgs),
    /// Blinded reader study
    #[command(subcommand)]
    Study(StudyCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Report corpus (JSONL)
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    /// Include the matched phrases behind each label
    #[arg(long)]
    pub provenance: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Report corpus (JSONL)
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    /// Send reports to a chat-completion endpoint instead of applying the rule set
    #[arg(long)]
    pub llm: bool,

    /// Endpoint base URL; `/chat/completions` is appended
    #[arg(long, value_name = "URL", requires = "llm")]
    pub endpoint: Option<String>,

    /// Model name sent with each request
    #[arg(long, value_name = "NAME", requires = "llm")]
    pub model: Option<String>,

    /// Environment variable holding the bearer token
    #[arg(long, value_name = "VAR", default_value = "CXREVAL_API_TOKEN")]
    pub token_env: String,

    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,

    /// Maximum concurrent requests
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,

    /// Also ask for two question/answer pairs per report
    #[arg(long, requires = "llm")]
    pub qa: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Count rule (10) and fraction rule (5%)
    MimicChexpert,
    /// Count rule only
    Indiana,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth corpus
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,

    /// Predicted corpus (JSONL); ids must exist in the ground truth
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,

    /// Ground-truth file format
    #[arg(long, value_enum, default_value = "jsonl")]
    pub gt_format: InputFormat,

    /// Id column of a CSV ground truth
    #[arg(long, value_name = "NAME", default_value = "id")]
    pub id_column: String,

    /// Map a CSV header to a finding, e.g. `Pleural Effusion=pleural_effusion`
    /// (repeatable; default maps headers that name a finding)
    #[arg(long = "column", value_name = "HEADER=FINDING")]
    pub columns: Vec<String>,

    /// Exclusion rule preset
    #[arg(long, value_enum, default_value = "mimic-chexpert")]
    pub preset: Preset,

    /// Override the minimum per-class sample count
    #[arg(long, value_name = "N")]
    pub min_class_count: Option<usize>,

    /// Override the minimum minority-class fraction
    #[arg(long, value_name = "F", conflicts_with = "no_fraction_rule")]
    pub min_class_fraction: Option<f64>,

    /// Disable the minority-class fraction rule
    #[arg(long)]
    pub no_fraction_rule: bool,

    /// Replace the name-excluded findings (repeatable; `none` clears the list)
    #[arg(long = "exclude", value_name = "FINDING")]
    pub exclude: Vec<String>,

    /// Bootstrap iterations
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,

    /// Confidence level of the bootstrap interval
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Sample records and write a session file
    Create(StudyCreateArgs),
    /// Serve the rating UI and API
    Serve(StudyServeArgs),
    /// Summarize the ratings of a session
    Analyze(StudyAnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct StudyCreateArgs {
    /// Corpus with `abnormal`, `image`, `text` and `ground_truth_text` per record
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,

    /// Rater ids, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub raters: Vec<String>,

    #[arg(long, default_value_t = 25)]
    pub n_abnormal: usize,

    #[arg(long, default_value_t = 25)]
    pub n_normal: usize,

    /// Session timestamp (RFC 3339); defaults to now
    #[arg(long, value_name = "TIME")]
    pub created_at: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyServeArgs {
    /// Session file written by `study create`
    #[arg(long, value_name = "PATH")]
    pub session: PathBuf,

    /// Ratings log (JSONL, appended); defaults to `ratings.jsonl` next to the session
    #[arg(long, value_name = "PATH")]
    pub ratings: Option<PathBuf>,

    /// Directory the session's image paths are relative to
    #[arg(long, value_name = "DIR")]
    pub images: PathBuf,

    /// Built rater UI (index.html and assets/)
    #[arg(long, value_name = "DIR")]
    pub ui: Option<PathBuf>,

    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,

    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct StudyAnalyzeArgs {
    #[arg(long, value_name = "PATH")]
    pub session: PathBuf,

    /// Ratings log; defaults to `ratings.jsonl` next to the session
    #[arg(long, value_name = "PATH")]
    pub ratings: Option<PathBuf>,
}
