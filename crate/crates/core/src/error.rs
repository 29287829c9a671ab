use thiserror::Error;

/// Failures raised while mapping accuracy levels to samples or drawing estimates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("accuracy level {y} is outside the domain of the {mode} mode")]
    InvalidLevel { y: f64, mode: &'static str },

    /// The level asks for an exact evaluation, so there is no sample count.
    #[error("accuracy level requests an exact evaluation")]
    ExactEvaluation,

    #[error("estimate needs {requested} samples, above the cap of {cap}")]
    SampleCap { requested: f64, cap: u64 },

    #[error("estimate produced a non-finite value")]
    NonFinite,

    #[error("probability alpha = 1 can only be met by exact evaluation")]
    ExactRequired,

    #[error("invalid probabilistic accuracy parameters: {0}")]
    InvalidSpec(String),

    #[error("operation requires {expected} mode")]
    WrongMode { expected: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter {name} = {value} violates {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("cannot parse value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown problem id `{0}`")]
    UnknownId(String),

    #[error("problem {id} requires {requirement}, got n = {n}")]
    BadDimension {
        id: &'static str,
        n: usize,
        requirement: &'static str,
    },
}

/// Errors that stop a solver run. The run loop turns these into a
/// [`TerminationReason`](crate::trace::TerminationReason).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("record {k} lacks the diagnostic `{field}`")]
    MissingDiagnostics { k: usize, field: &'static str },

    #[error("invalid theory parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {detail}")]
    Parse {
        what: &'static str,
        path: String,
        detail: String,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Problem(#[from] ProblemError),

    #[error(transparent)]
    Theory(#[from] TheoryError),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
