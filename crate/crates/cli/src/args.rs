use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simsearch_core::synthetic::SyntheticSpec;
use simsearch_core::{Metric, SearchMode};

#[derive(Debug, Parser)]
#[command(name = "simsearch", version, about = "Embedding similarity search and metric learning")]
pub struct Cli {
    /// Debug-level diagnostics on stderr (overridden by RUST_LOG).
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an embedding model with triplet loss.
    Train(TrainArgs),
    /// Embed a dataset with a trained model and write EMB1.
    Export(ExportArgs),
    /// Build an index snapshot from an EMB1 or JSON-lines file.
    Build(BuildArgs),
    /// Query an index snapshot and print a ranked table.
    Query(QueryArgs),
    /// Measure query latency; prints a JSON report.
    Bench(BenchArgs),
    /// Leave-one-out recall and precision at k; prints a JSON report.
    Eval(EvalArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
    /// Project embeddings to 2-D with PCA and write `id,label,x,y` CSV.
    Scatter(ScatterArgs),
}

/// `path/to/data.csv` or `synthetic:classes=5,n=500,dim=32,sep=5,seed=0`.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("synthetic:") {
            Some(spec) => spec.parse().map(DataSource::Synthetic).map_err(|e| e.to_string()),
            None if s.is_empty() => Err("empty data path".into()),
            None => Ok(DataSource::Csv(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Csv(p) => write!(f, "{}", p.display()),
            DataSource::Synthetic(s) => write!(
                f,
                "synthetic:classes={},n={},dim={},sep={},seed={}",
                s.classes, s.n, s.dim, s.sep, s.seed
            ),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV rows `label,x1,...,xd` or a synthetic spec.
    #[arg(long)]
    pub data: DataSource,
    /// Model checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log to write.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long = "lr", default_value_t = 0.05)]
    pub base_lr: f64,
    /// Epochs at which the learning rate drops, e.g. `30,60`.
    #[arg(long, value_delimiter = ',')]
    pub lr_boundaries: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub lr_factor: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of samples used for training; the rest validates.
    #[arg(long, default_value_t = 0.85)]
    pub split_fraction: f64,
    /// Hidden layer widths, e.g. `64` or `128,64`.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Log wall_seconds as 0 so the log is byte-reproducible.
    #[arg(long)]
    pub no_wall_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Train,
    Val,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: DataSource,
    #[arg(long)]
    pub out: PathBuf,
    /// Which side of the train/validation split to embed.
    #[arg(long, value_enum, default_value_t = Subset::All)]
    pub subset: Subset,
    /// Must match the values used for training to reproduce its split.
    #[arg(long, default_value_t = 0.85)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record timestamp; defaults to now.
    #[arg(long)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// EMB1 file, or JSON lines `{"id":..,"label":..,"ts":..,"vec":[..]}`.
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip unparseable, zero, non-finite or wrong-dimension records instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
    /// Timestamp for records that carry none; defaults to now.
    #[arg(long)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Hamming,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Cosine,
    SquaredEuclidean,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::SquaredEuclidean => Metric::SquaredEuclidean,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchOpts {
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Hamming shortlist length for two_stage (default 10 * k).
    #[arg(long)]
    pub shortlist: Option<usize>,
    #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
    pub metric: MetricArg,
}

impl SearchOpts {
    pub fn mode(&self) -> SearchMode {
        match self.mode {
            ModeArg::Exact => SearchMode::Exact,
            ModeArg::Hamming => SearchMode::Hamming,
            ModeArg::TwoStage => SearchMode::TwoStage { shortlist: self.shortlist },
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("query").required(true).args(["vec", "id"]))]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub vec: Option<Vec<f64>>,
    /// Query by a stored item; the item itself is left out of the results.
    #[arg(long)]
    pub id: Option<u64>,
    #[arg(short, long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[command(flatten)]
    pub search: SearchOpts,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub queries: u64,
    #[arg(short, long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Labeled query embeddings (EMB1 or JSON lines).
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(short, long, value_delimiter = ',', default_value = "1,5,10", value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
    #[command(flatten)]
    pub search: SearchOpts,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Snapshot to load at startup; starts empty when omitted.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, env = "SIMSEARCH_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "SIMSEARCH_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Base directory for snapshot and restore paths.
    #[arg(long, env = "SIMSEARCH_SNAPSHOT_DIR")]
    pub snapshot_dir: Option<PathBuf>,
    #[arg(long, env = "SIMSEARCH_RETENTION_S", default_value_t = simsearch_service::DEFAULT_RETENTION_S)]
    pub retention_s: u64,
    /// Run eviction of entries older than the retention window this often.
    #[arg(long, env = "SIMSEARCH_EVICT_INTERVAL_S")]
    pub evict_interval_s: Option<u64>,
    /// Feedback log; defaults to `feedback.jsonl` in the snapshot directory or the working directory.
    #[arg(long, env = "SIMSEARCH_FEEDBACK_LOG")]
    pub feedback_log: Option<PathBuf>,
    /// Tail this EMB1 / JSON-lines file and upsert appended records.
    #[arg(long)]
    pub stream: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
