use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tablescope_core::ScorerKind;

#[derive(Debug, Parser)]
#[command(
    name = "tablescope",
    version,
    about = "Table-centric semantic document parsing",
    long_about = "Links tables to the paragraphs that describe them, retrieves tables for \
                  queries, builds balanced training pairs from annotations and evaluates \
                  the results.\n\nExit codes: 0 success, 1 invalid input, 2 scorer or \
                  transport failure, 3 usage error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw block JSON and rewrite it in canonical form.
    Ingest(IngestArgs),
    /// Check documents against the block schema and geometry rules.
    Validate(DocsArgs),
    /// Per-source and total corpus counts.
    Stats(StatsArgs),
    /// Find the related text blocks of every table in a document.
    Parse(ParseArgs),
    /// Rank a document's tables against a query.
    Retrieve(RetrieveArgs),
    /// Balanced positive/negative pairs from consensus triplets.
    BuildTraining(BuildTrainingArgs),
    /// Seeded train/test split of training pairs.
    Split(SplitArgs),
    /// Pair-level confusion, precision, recall and F1.
    EvaluatePairs(EvalLabelsArgs),
    /// Document-level All/POS/NEG correct counts.
    EvaluateDocs(EvalLabelsArgs),
    /// Recall@K over retrieval rankings.
    EvaluateRetrieval(EvalRetrievalArgs),
    /// Per-pair scorer latency with a seeded batch breakdown.
    Bench(BenchArgs),
    /// Run the HTTP annotation and parsing service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FormatArgs {
    /// Canonical JSON, or an aligned plain-text table.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    /// heuristic, remote, or llm-prompt.
    #[arg(long, default_value = "heuristic", value_parser = parse_scorer)]
    pub scorer: ScorerKind,
    /// Scoring server base URL for the remote scorer.
    #[arg(long, env = "TABLESCOPE_ENDPOINT", value_name = "URL")]
    pub endpoint: Option<String>,
    /// Decision threshold: a pair is related iff its score is >= theta.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Weight of the lexical score when no table number matches (heuristic only).
    #[arg(long, default_value_t = 0.9)]
    pub lexical_weight: f64,
    /// Pairs per scorer call.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Only consider text blocks within this many pages of the table.
    #[arg(long, value_name = "PAGES")]
    pub page_window: Option<u32>,
    /// Remote request timeout in seconds.
    #[arg(long, default_value_t = 60.0, value_name = "SECONDS")]
    pub timeout: f64,
}

fn parse_scorer(s: &str) -> Result<ScorerKind, String> {
    s.parse().map_err(|e: tablescope_core::association::ConfigError| e.0)
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw document JSON files.
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,
    /// Output file (single input only).
    #[arg(long, value_name = "PATH", conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Write one `<doc_id>.json` per input into this directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DocsArgs {
    /// Document files, or directories of `*.json` documents.
    #[arg(required = true, value_name = "DOC")]
    pub docs: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub docs: DocsArgs,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Canonical document JSON.
    #[arg(long, value_name = "PATH")]
    pub doc: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Recorded LLM replies (JSON Lines of table_block_id, text_block_id, reply).
    /// Without it, `--scorer llm-prompt` prints the prompts instead of parsing.
    #[arg(long, value_name = "PATH")]
    pub replies: Option<PathBuf>,
    /// Also write per-pair predicted labels as JSON Lines.
    #[arg(long, value_name = "PATH")]
    pub pairs_out: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Canonical document JSON.
    #[arg(long, value_name = "PATH")]
    pub doc: PathBuf,
    /// Query text.
    #[arg(long, required_unless_present = "queries", conflicts_with = "queries")]
    pub query: Option<String>,
    #[arg(long, default_value = "q")]
    pub query_id: String,
    /// JSON Lines of queries (query_id, text); emits one ranking per line.
    #[arg(long, value_name = "PATH")]
    pub queries: Option<PathBuf>,
    /// Number of tables to return.
    #[arg(long)]
    pub k: usize,
    /// A previous `parse` result; computed on the fly when absent.
    #[arg(long, value_name = "PATH")]
    pub parsed: Option<PathBuf>,
    /// Score each table together with its related text.
    #[arg(long)]
    pub with_related_text: bool,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BuildTrainingArgs {
    /// Canonical documents referenced by the triplets.
    #[arg(long = "doc", required = true, value_name = "PATH")]
    pub docs: Vec<PathBuf>,
    /// Consensus triplets (JSON Lines).
    #[arg(long, value_name = "PATH")]
    pub triplets: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Training pairs (JSON Lines).
    #[arg(long, value_name = "PATH")]
    pub samples: PathBuf,
    /// Train:test ratio.
    #[arg(long, default_value = "7:3", value_parser = parse_ratio)]
    pub ratio: (u32, u32),
    #[arg(long)]
    pub seed: u64,
    /// Keep every document's pairs on one side of the split.
    #[arg(long)]
    pub by_document: bool,
    #[arg(long, value_name = "PATH")]
    pub train_out: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub test_out: PathBuf,
}

fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected R1:R2, e.g. 7:3")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a == 0 || b == 0 {
        return Err("both ratio parts must be positive".into());
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct EvalLabelsArgs {
    /// Predicted pair labels (JSON Lines of doc_id, table_block_id, text_block_id, label).
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    /// Gold pair labels in the same format.
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    /// Rankings from `retrieve` (JSON Lines).
    #[arg(long, value_name = "PATH")]
    pub rankings: PathBuf,
    /// JSON Lines of query_id and gold_table_id.
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    /// Cutoffs to report.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Time per-pair scorer calls over these documents.
    #[arg(long = "doc", value_name = "PATH", required_unless_present = "durations")]
    pub docs: Vec<PathBuf>,
    /// Analyze previously measured durations instead (JSON array or one number per line, seconds).
    #[arg(long, value_name = "PATH", conflicts_with = "docs")]
    pub durations: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub batches: usize,
    #[arg(long)]
    pub seed: u64,
    /// Write per-batch CSV (batch_id, mean_s, median_s).
    #[arg(long, value_name = "PATH")]
    pub emit_plot_data: Option<PathBuf>,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Event log; state is kept in memory only when absent.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    /// Page images laid out as <dir>/<doc_id>/<page_id>.png.
    #[arg(long, value_name = "DIR")]
    pub page_images: Option<PathBuf>,
    /// Static annotation UI bundle, served under /ui.
    #[arg(long, value_name = "DIR")]
    pub ui: Option<PathBuf>,
    /// Default remote scoring endpoint.
    #[arg(long, env = "TABLESCOPE_ENDPOINT", value_name = "URL")]
    pub endpoint: Option<String>,
}
