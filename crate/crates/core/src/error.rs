use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: labeled row without label")]
    MissingLabel { row: usize },

    #[error("row {row}: set indicator must be \"0\" or \"1\", got `{value}`")]
    BadSetIndicator { row: usize, value: String },

    #[error("non-contiguous labels: found {found:?}")]
    NonContiguousLabels { found: Vec<usize> },

    #[error("empty class group {class}")]
    EmptyClassGroup { class: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("separability violated: denominator {denominator:e}")]
    Separability { denominator: f64 },

    #[error("degenerate group proportion: {0}")]
    DegenerateProportion(&'static str),

    #[error("ill-conditioned system: condition estimate {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("{what} did not converge after {iterations} iterations (last change {last:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors caused by unreadable or malformed input files, as opposed to
    /// violations of a statistical contract.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::MissingColumn(_)
                | Error::Parse { .. }
                | Error::MissingLabel { .. }
                | Error::BadSetIndicator { .. }
                | Error::NonContiguousLabels { .. }
        )
    }
}
