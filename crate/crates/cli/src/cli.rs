use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "apiplan", version, about = "Build, serve, forge, run and grade API-plan benchmarks")]
pub struct Cli {
    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// API coupling graph.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Solution paths over the graph.
    #[command(subcommand)]
    Solutions(SolutionsCmd),
    /// Synthetic corpus snapshots.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Serve a corpus snapshot over HTTP.
    Serve(ServeArgs),
    /// Benchmark datasets.
    #[command(subcommand)]
    Forge(ForgeCmd),
    /// Agent runs.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Grading and scoring.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    EntityId,
    Linkable,
    Raw,
}

#[derive(Debug, Args)]
pub struct RegistryArgs {
    /// Registry document; the bundled scholarly registry when omitted.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linkable")]
    pub policy: Policy,
}

#[derive(Debug, Subcommand)]
pub enum GraphCmd {
    /// Build the coupling graph and write it as JSON and DOT.
    Build {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SolutionsCmd {
    /// Enumerate paths up to a hop limit and build the concise library.
    Enumerate {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Generate a synthetic corpus snapshot.
    Generate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = apiplan_core::corpus::DEFAULT_SCHOLARS)]
        scholars: usize,
        #[arg(long, default_value_t = apiplan_core::corpus::DEFAULT_PUBS)]
        pubs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Builtin,
    Llm,
}

#[derive(Debug, Subcommand)]
pub enum ForgeCmd {
    /// Forge, verify and export a benchmark dataset.
    Dataset {
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Verify against this running service instead of in process.
        #[arg(long)]
        service: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        instantiations: Option<usize>,
        #[arg(long)]
        split_ratio: Option<f64>,
        /// `llm` sends template and plan prompts to the configured backend.
        #[arg(long, value_enum, default_value = "builtin")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendChoice {
    Stub,
    Remote,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendChoice>,
    #[arg(long)]
    pub stub_fixtures: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AgentCmd {
    /// Run the agent over a dataset and write transcripts.
    Run {
        #[command(flatten)]
        registry: RegistryArgs,
        /// Records to answer (usually the test split).
        #[arg(long)]
        dataset: PathBuf,
        /// Training records the prompt exemplars come from.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        service: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Exemplars per solution in the plan prompts.
        #[arg(long, default_value_t = apiplan_core::llm::DEFAULT_EXEMPLARS)]
        exemplars: usize,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long = "limits.max_calls", default_value_t = apiplan_core::plan::Limits::default().max_calls)]
        max_calls: usize,
        /// Answer only the first N records.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Doc,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Grade transcripts against gold records.
    Grade {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Transcripts are baseline call trajectories rather than agent runs.
        #[arg(long)]
        external: bool,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, num_args = 1..)]
        weights: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score from per-hop accuracies.
    Score {
        #[arg(long, num_args = 1.., required = true)]
        acc: Vec<f64>,
        #[arg(long, num_args = 1..)]
        weights: Option<Vec<f64>>,
    },
}
