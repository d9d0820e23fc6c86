use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model specification violates one of its invariants.
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter lies outside the domain of a closed-form function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("scale exceeds series length: tau = {tau}, length = {len}")]
    ScaleExceedsLength { tau: u64, len: usize },

    #[error("scales too large for the series (need at least 2 aggregated rows): {taus:?}")]
    UnusableScales { taus: Vec<u64> },

    #[error("asset {index} ({label}) has zero sample variance")]
    ZeroVariance { index: usize, label: String },

    #[error("not a valid correlation structure: rho^2 = {rho_sq} > 1 at index {index}")]
    NotCorrelationStructure { index: usize, rho_sq: f64 },

    #[error("resolvent is singular at lambda = {lambda} (pole at 1 - rho_{index}^2)")]
    Singular { lambda: f64, index: usize },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("curve has {got} points, at least {need} are required")]
    TooFewPoints { got: usize, need: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("non-finite value at line {line}, column {column}")]
    NonFinite { line: u64, column: usize },

    #[error("header error: {0}")]
    Header(String),

    #[error("unsupported results schema {0}")]
    Schema(u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad caller input rather than bad data or
    /// a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidArgument(_)
                | Error::Domain(_)
                | Error::NotCorrelationStructure { .. }
                | Error::TooFewPoints { .. }
                | Error::ScaleExceedsLength { .. }
                | Error::UnusableScales { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Singular { .. })
    }
}
