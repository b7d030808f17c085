use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("agent {agent} has an empty valuation support")]
    EmptySupport { agent: usize },

    #[error("prior of agent {agent} sums to {sum}, expected 1")]
    ProbabilitySumMismatch { agent: usize, sum: f64 },

    #[error("feasibility predicate accepts no joint allocation")]
    InfeasibleInstance,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("valuation is not XOS")]
    NotXos,

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("enumeration needs {required} evaluations, limit is {limit}")]
    EnumerationTooLarge { required: u128, limit: u128 },

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("type {type_index} of agent {agent} has zero prior probability")]
    ZeroProbabilityType { agent: usize, type_index: usize },

    #[error("instance is not downward-closed")]
    NotDownwardClosed,

    #[error("combinatorial auction with {items} items exceeds the limit of {limit}")]
    TooManyItems { items: usize, limit: usize },

    #[error("instance is not single-parameter: {0}")]
    NotSingleParameter(String),

    #[error("algorithm `{0}` has no finite randomness domain")]
    NotEnumerable(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySupport { .. } => "empty-support",
            Error::ProbabilitySumMismatch { .. } => "probability-sum-mismatch",
            Error::InfeasibleInstance => "infeasible-instance",
            Error::InvalidInstance(_) => "invalid-instance",
            Error::NotXos => "not-xos",
            Error::NumericFailure(_) => "numeric-failure",
            Error::EnumerationTooLarge { .. } => "enumeration-too-large",
            Error::InvalidEpsilon(_) => "invalid-epsilon",
            Error::ZeroProbabilityType { .. } => "zero-probability-type",
            Error::NotDownwardClosed => "not-downward-closed",
            Error::TooManyItems { .. } => "too-many-items",
            Error::NotSingleParameter(_) => "not-single-parameter",
            Error::NotEnumerable(_) => "not-enumerable",
            Error::Unknown { .. } => "unknown-name",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
