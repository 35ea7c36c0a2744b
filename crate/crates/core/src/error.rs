use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
///
/// [`Error::category`] gives the short machine-greppable tag the CLI prints.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: human score {value} outside [0, 100]")]
    Range { line: usize, value: f64 },

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("bad store format: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("no embedding for sentence {0:?}")]
    MissingEmbedding(String),

    #[error("cosine undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("degenerate F score: alpha*P + (1-alpha)*R = 0 with P={precision}, R={recall}")]
    DegenerateScore { precision: f64, recall: f64 },

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("need at least 2 systems, found {0}")]
    InsufficientSystems(usize),

    #[error("training diverged at step {step} (lr={lr})")]
    Divergence { step: u64, lr: f64 },

    #[error("every grid trial diverged: {}", .0.join("; "))]
    AllDiverged(Vec<String>),

    #[error("prediction matrix incomplete: segment {segment} has no value for column {column}")]
    IncompleteMatrix { segment: String, column: String },

    #[error("column {0} has zero variance")]
    DegenerateColumn(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Range { .. } => "range",
            Error::DuplicateKey(_) => "duplicate-key",
            Error::Argument(_) => "argument",
            Error::Format(_) => "format",
            Error::Corruption(_) => "corruption",
            Error::Consistency(_) => "consistency",
            Error::MissingEmbedding(_) => "missing-embedding",
            Error::UndefinedSimilarity => "undefined-similarity",
            Error::DegenerateScore { .. } => "degenerate-score",
            Error::Lookup(_) => "lookup",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::InsufficientSystems(_) => "insufficient-systems",
            Error::Divergence { .. } | Error::AllDiverged(_) => "divergence",
            Error::IncompleteMatrix { .. } => "incomplete-matrix",
            Error::DegenerateColumn(_) => "degenerate-column",
            Error::Io { .. } => "io",
            Error::Stage { source, .. } => source.category(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
