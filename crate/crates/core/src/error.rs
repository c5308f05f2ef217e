use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {message}")]
    CsvHeader { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("need at least {needed} variants, have {got} ({context})")]
    TooFewVariants {
        needed: usize,
        got: usize,
        context: &'static str,
    },

    #[error("design matrix is rank deficient ({0})")]
    RankDeficient(String),

    #[error("degenerate instruments: {0}")]
    Degenerate(String),

    #[error(
        "coordinate descent did not converge at lambda = {lambda:.6e} \
         after {iterations} passes (last max change {max_change:.3e})"
    )]
    NoConvergence {
        lambda: f64,
        iterations: usize,
        max_change: f64,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_) | Error::Degenerate(_) | Error::NoConvergence { .. }
        )
    }
}
