use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid parent: {0}")]
    InvalidParent(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("too many outcomes for enumeration: {outcomes} > cap {cap}")]
    EnumerationCap { outcomes: usize, cap: usize },

    #[error("malformed SDP: {0}")]
    MalformedProblem(String),

    #[error("dual infeasible at {constraint} (violation {violation:.3e})")]
    InfeasibleDual { constraint: String, violation: f64 },

    #[error("marginal mismatch: max deviation {max_dev:.3e} exceeds {tol:.1e}")]
    MarginalMismatch { max_dev: f64, tol: f64 },

    #[error("empty support")]
    EmptySupport,

    #[error("support enumeration of {count} items exceeds cap {cap}; shard the search")]
    SupportCountOverflow { count: u128, cap: u128 },

    #[error("no feasible support with size in [{lower}, {upper}]")]
    AllSizesInfeasible { lower: usize, upper: usize },

    #[error("shape excluded: {0}")]
    ShapeExcluded(String),

    #[error("measurement set is compatible; no incompatibility direction")]
    CompatibleInput,

    #[error("direction is zero")]
    ZeroDirection,

    #[error("matrix is not unitary (deviation {dev:.3e})")]
    NotUnitary { dev: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operator not supported on the support of the reference state (leak {leak:.3e})")]
    SupportViolation { leak: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
