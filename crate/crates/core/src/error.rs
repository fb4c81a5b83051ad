//! Error types shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must have full column rank does not, at the crate's
    /// rank tolerance. `matrix` names the offending object.
    #[error("{matrix} is rank deficient: rank {rank} < {expected} (condition {condition:.3e})")]
    RankDeficient {
        matrix: String,
        rank: usize,
        expected: usize,
        condition: f64,
    },

    /// The panel has too few periods for the requested proxy set:
    /// partialling m proxy columns out of T periods requires T > m.
    #[error("TooFewPeriods: requires T > {min_exclusive}, dataset has T = {available}")]
    TooFewPeriods {
        min_exclusive: usize,
        available: usize,
    },

    /// Proxy spec expands to m >= T columns.
    #[error("too many proxy columns: m = {m} must be < T = {t}")]
    TooManyProxies { m: usize, t: usize },

    #[error("unbalanced panel: unit {unit} observed in {found} periods, expected {expected}")]
    UnbalancedPanel {
        unit: String,
        found: usize,
        expected: usize,
    },

    #[error("missing or non-numeric value for unit {unit}, time {time}, column {column}")]
    MissingValue {
        unit: String,
        time: String,
        column: String,
    },

    #[error("duplicate observation for unit {unit} at time {time}")]
    DuplicateObservation { unit: String, time: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for CLI exit codes and Monte Carlo failure
/// tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ErrorKind {
    Data,
    Rank,
    Config,
    Io,
}

impl ErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Data => "data",
            ErrorKind::Rank => "rank",
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RankDeficient { .. }
            | Error::TooFewPeriods { .. }
            | Error::TooManyProxies { .. } => ErrorKind::Rank,
            Error::UnbalancedPanel { .. }
            | Error::MissingValue { .. }
            | Error::DuplicateObservation { .. }
            | Error::SchemaMismatch(_) => ErrorKind::Data,
            Error::DimensionMismatch(_) | Error::InvalidConfig(_) => ErrorKind::Config,
            Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }
}
