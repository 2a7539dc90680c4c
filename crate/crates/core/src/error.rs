use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("row {row}: {field} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        row: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error(
        "duplicate key ({task_id}, {rater_id}, {prompt_id}) at rows {first_row} and {second_row}"
    )]
    DuplicateKey {
        task_id: String,
        rater_id: String,
        prompt_id: String,
        first_row: usize,
        second_row: usize,
    },

    #[error("{path}: rejected {} row(s):\n{}", .problems.len(), .problems.iter().map(|p| format!("  {p}")).collect::<Vec<_>>().join("\n"))]
    Rejected { path: PathBuf, problems: Vec<Error> },

    #[error("{0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("rank deficient design: column `{column}` is collinear with earlier columns{step}")]
    RankDeficient { column: String, step: String },

    #[error("noise dominates signal: lambda_hat = {0}")]
    NoiseDominates(f64),

    #[error("template error: {0}")]
    Template(String),

    #[error("response parse error: {0}")]
    Parse(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("ambiguous prompt polarity: {0}")]
    AmbiguousPolarity(String),

    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
