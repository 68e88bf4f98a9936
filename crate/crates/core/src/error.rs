use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent user input.
    Input,
    /// Input parsed but the data itself is unusable (gaps, degenerate values).
    DataQuality,
    /// An internal invariant was violated.
    Invariant,
}

/// The module an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    EnergyData,
    ClusterModel,
    Dispatch,
    Sensitivity,
    Validation,
    Report,
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Module::EnergyData => "energy_data",
            Module::ClusterModel => "cluster_model",
            Module::Dispatch => "dispatch_optimizer",
            Module::Sensitivity => "sensitivity",
            Module::Validation => "forecast_validation",
            Module::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },

    #[error("row {row}: timestamp {value:?} has no explicit UTC offset or is unparseable")]
    Timestamp { row: usize, value: String },

    #[error("row {row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { row: usize, timestamp: String },

    #[error("row {row}: negative generation {value} for non-storage source {source_name:?}")]
    NegativeGeneration {
        row: usize,
        source_name: String,
        value: f64,
    },

    #[error("no emission factor for source(s): {}", .0.join(", "))]
    MissingFactor(Vec<String>),

    #[error("no emission factor table for year {0}")]
    MissingFactorYear(i32),

    #[error("interval starting {0} has zero total generation")]
    ZeroGeneration(String),

    #[error("no price covers interval(s): {}", .0.join(", "))]
    UnmatchedPrice(Vec<String>),

    #[error("gap of {hours} h after {after}; only gaps shorter than 1 h are interpolated")]
    Gap { after: String, hours: f64 },

    #[error("interval starting {0} overlaps its predecessor or is out of order")]
    Overlap(String),

    #[error("year {year} covers only {:.1}% of its expected duration", .coverage * 100.0)]
    PartialYear { year: i32, coverage: f64 },

    #[error("{module}: invalid {what}: {msg}")]
    InvalidParameter {
        module: Module,
        what: &'static str,
        msg: String,
    },

    #[error("unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String },

    #[error("utilisation {0} selects no interval")]
    EmptyRunSet(f64),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("empty interval series")]
    EmptySeries,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(module: Module, what: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            what,
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NegativeGeneration { .. }
            | Error::ZeroGeneration(_)
            | Error::UnmatchedPrice(_)
            | Error::Gap { .. }
            | Error::Overlap(_)
            | Error::PartialYear { .. }
            | Error::DegenerateRegression(_) => ErrorKind::DataQuality,
            Error::Invariant(_) => ErrorKind::Invariant,
            _ => ErrorKind::Input,
        }
    }

    pub fn module(&self) -> Module {
        match self {
            Error::InvalidParameter { module, .. } => *module,
            Error::UnknownName { .. } => Module::ClusterModel,
            Error::EmptyRunSet(_) | Error::EmptySeries | Error::Invariant(_) => Module::Dispatch,
            Error::DegenerateRegression(_) => Module::Validation,
            Error::Json(_) => Module::Report,
            Error::Toml(_) => Module::ClusterModel,
            _ => Module::EnergyData,
        }
    }
}
