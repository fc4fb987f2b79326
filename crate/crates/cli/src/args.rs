use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slg_core::corpus::{ChunkPolicy, DEFAULT_OVERLAP_THRESHOLD};
use slg_core::dataset::DEFAULT_QUESTIONS_PER_CHUNK;

#[derive(Debug, Parser)]
#[command(name = "slg", version, about = "Build, serve and evaluate a small language graph")]
pub struct Cli {
    /// JSON file with default flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub log_level: Option<LogLevel>,

    /// Default output directory [env: SLG_OUT_DIR] [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Seed for question generation and splitting [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Error => "error",
            LogLevel::Warn => "warn",
            LogLevel::Info => "info",
            LogLevel::Debug => "debug",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a document, write one chunk per subsection and audit overlaps
    #[command(args_override_self = true)]
    Ingest(IngestArgs),
    /// Generate question-answer pairs and the expert and orchestrator datasets
    #[command(args_override_self = true)]
    Dataset(DatasetArgs),
    /// Audit chunk overlaps or orchestrator routing
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Serve a graph over HTTP
    #[command(args_override_self = true)]
    Serve(ServeArgs),
    /// Answer one query through a graph
    #[command(args_override_self = true)]
    Query(QueryArgs),
    /// Score a graph or a single model on a test set
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Write run manifests for a sweep plan and execute the runnable ones
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Dataset(_) => "dataset",
            Command::Audit(_) => "audit",
            Command::Serve(_) => "serve",
            Command::Query(_) => "query",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// markdown or manifest; inferred from the file extension when omitted
    #[arg(long)]
    pub format: Option<String>,
    /// Section depth that becomes one expert each
    #[arg(long, default_value_t = ChunkPolicy::default().target_depth)]
    pub depth: usize,
    /// Chunks with fewer tokens are folded into their preceding sibling
    #[arg(long, default_value_t = ChunkPolicy::default().min_tokens)]
    pub min_tokens: usize,
    /// Shortest shared sentence prefix, in tokens, that counts as an overlap
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    pub overlap_threshold: usize,
    /// Exit with status 2 when the overlap audit finds anything
    #[arg(long)]
    pub fail_on_overlap: bool,
    /// Output directory [default: the global output directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuestionBackend {
    /// Offline templated questions built from each chunk's distinctive terms
    Template,
    /// A chat-completion endpoint
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnswerModeArg {
    Full,
    Extractive,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// chunks.jsonl written by `ingest`
    #[arg(long)]
    pub chunks: PathBuf,
    #[arg(long, value_enum, default_value_t = QuestionBackend::Template)]
    pub backend: QuestionBackend,
    /// Endpoint URL for the remote backend
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name for the remote backend
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = DEFAULT_QUESTIONS_PER_CHUNK)]
    pub n_questions: usize,
    /// Train, validation and test fractions
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[arg(long, value_enum, default_value_t = AnswerModeArg::Full)]
    pub answer_mode: AnswerModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Report sentence prefixes shared between chunks
    #[command(args_override_self = true)]
    Overlap(OverlapArgs),
    /// Route every question of an orchestrator dataset and report accuracy
    #[command(args_override_self = true)]
    Routing(RoutingArgs),
}

impl AuditCommand {
    pub fn name(&self) -> &'static str {
        match self {
            AuditCommand::Overlap(_) => "overlap",
            AuditCommand::Routing(_) => "routing",
        }
    }
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long)]
    pub chunks: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    pub threshold: usize,
    #[arg(long)]
    pub fail_on_overlap: bool,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoutingArgs {
    #[arg(long)]
    pub graph_spec: PathBuf,
    /// Orchestrator dataset (JSONL)
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Exit with status 2 when accuracy falls below this value
    #[arg(long)]
    pub min_accuracy: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub graph_spec: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Queries answered at once; further requests wait
    #[arg(long, default_value_t = 8)]
    pub max_concurrency: usize,
    /// Trace log directory [default: <out-dir>/traces]
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub graph_spec: PathBuf,
    #[arg(long)]
    pub query: String,
    /// Print the full route trace as JSON instead of the plain answer
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score this graph
    #[arg(long, conflicts_with = "reference_train", required_unless_present = "reference_train")]
    pub graph_spec: Option<PathBuf>,
    /// Score one memorization model trained on this pooled dataset
    #[arg(long)]
    pub reference_train: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Split the test file must carry
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report path [default: <out-dir>/report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write a one-row comparison CSV here
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// System label used in the CSV
    #[arg(long)]
    pub system: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep plan JSON [default: the four-stage, 13-run plan]
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Directory written by `dataset`
    #[arg(long)]
    pub datasets: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing run records
    #[arg(long)]
    pub force: bool,
    /// Record zero wall times so repeated sweeps write identical files
    #[arg(long)]
    pub reproducible: bool,
}
