use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An argument fell outside the mathematical domain of a structural map.
    #[error("domain error: {0}")]
    Domain(String),

    /// The censoring survival estimate vanishes at an uncensored duration, so
    /// the inverse weight is undefined.
    #[error(
        "censoring survival estimate {survival:e} at uncensored observation {index} (y = {y}) is below the weight floor; \
         the follow-up window does not cover this duration"
    )]
    ZeroWeight { index: usize, y: f64, survival: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
