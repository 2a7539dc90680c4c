use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "latent-gauge",
    version,
    about = "Validity checks for model-generated scores"
)]
struct Cli {
    /// Seed for simulation and mock scoring.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file. Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score task statements with a model provider (or the built-in mock).
    Score(ScoreArgs),
    /// Weighted task-to-occupation aggregation.
    Aggregate(AggregateArgs),
    /// Pairwise inter-rater reliability.
    Reliability(ReliabilityArgs),
    /// Correlation matrix and principal components of an index table.
    Pca(PcaArgs),
    /// Prompt rank correlations, polarity inversion and variance decomposition.
    Prompts(PromptsArgs),
    /// OLS and stacked ORIV regressions with the attenuation estimate.
    Oriv(OrivArgs),
    /// Progressive R-squared over regressor blocks.
    Horserace(HorseraceArgs),
    /// Generate synthetic data with a known measurement structure.
    Simulate(SimulateArgs),
    /// Run the full validity pipeline from a config file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// CSV with task_id, occupation_code, weight, task_text.
    #[arg(long)]
    tasks: PathBuf,
    /// Template id(s), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "A")]
    template: Vec<String>,
    /// JSON file of templates; the built-in A-D are used otherwise.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Initial retry delay in milliseconds.
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    /// Use the deterministic mock provider.
    #[arg(long)]
    mock: bool,
    /// Mock level offset for this model, in score points.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
    /// Mock per-score noise sd.
    #[arg(long, default_value_t = 8.0)]
    noise_sd: f64,
    /// HTTP endpoint for a real provider.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "http")]
    provider: String,
    /// Existing panel to extend with the new records.
    #[arg(long)]
    merge: Option<PathBuf>,
    /// Where to write the failure manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, default_value = "augmentation")]
    field: String,
    #[arg(long, default_value_t = 1)]
    min_tasks: usize,
    /// Also write a wide index table (one column per rater and prompt).
    #[arg(long)]
    wide: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReliabilityArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, default_value = "task")]
    level: String,
    #[arg(long, default_value = "augmentation")]
    field: String,
    /// Restrict to one prompt variant.
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Write paired scores with means and differences (Bland-Altman data).
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PcaArgs {
    /// Index table CSV: occupation_code plus numeric columns.
    #[arg(long)]
    indices: PathBuf,
    /// Loadings CSV for biplots.
    #[arg(long)]
    loadings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptsArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    rater: String,
    #[arg(long, default_value = "augmentation")]
    field: String,
    /// Prompts known to score the reversed construct.
    #[arg(long, value_delimiter = ',')]
    inverse: Vec<String>,
}

#[derive(Debug, Args)]
struct OrivArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    measure_a: String,
    #[arg(long)]
    measure_b: String,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    /// Column of cluster labels for the OLS standard errors.
    #[arg(long)]
    cluster: Option<String>,
}

#[derive(Debug, Args)]
struct HorseraceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    /// JSON array of {"label": ..., "regressors": [...]}.
    #[arg(long)]
    blocks: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimKind {
    /// Latent, outcome and noisy measures as one CSV.
    Measurement,
    /// Task x prompt grid with planted variance shares, as a panel CSV.
    Grid,
    /// Panel, outcome table and pipeline config in a directory.
    Study,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimKind::Measurement)]
    kind: SimKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.8)]
    lambda: f64,
    /// Measures as name=offset pairs.
    #[arg(long, value_delimiter = ',', default_value = "measure_a=0,measure_b=0")]
    offsets: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    noise_corr: f64,
    #[arg(long, default_value_t = 0.25)]
    outcome_sd: f64,
    /// Grid: planted task, prompt and residual shares.
    #[arg(long, value_delimiter = ',', default_value = "0.14,0.22,0.64")]
    shares: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    prompts: usize,
    /// Study: number of occupations.
    #[arg(long, default_value_t = 200)]
    occupations: usize,
    #[arg(long, default_value_t = 8)]
    tasks_per_occupation: usize,
    /// Study: second rater's level offset in points.
    #[arg(long, default_value_t = 8.6, allow_hyphen_values = true)]
    rater_offset: f64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
