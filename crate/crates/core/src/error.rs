use thiserror::Error;

use crate::triangle_i::{PairState, RunTrace};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector must have at least one coordinate")]
    EmptyVector,

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("segment endpoints coincide")]
    DegenerateSegment,

    #[error("pair points coincide (distance {gap:e}); no bisector exists")]
    DegeneratePair { gap: f64 },

    #[error("hyperplane normal has zero length")]
    ZeroNormal,

    #[error("support direction has zero length")]
    ZeroDirection,

    #[error("body has no points")]
    EmptyBody,

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("polytope is unbounded")]
    UnboundedBody,

    #[error("polytope is empty")]
    InfeasibleBody,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("start point is not in body {body}")]
    StartNotInBody { body: &'static str },

    #[error("iteration limit {limit} exceeded")]
    MaxIterExceeded {
        limit: u64,
        best: Box<PairState>,
        trace: Box<RunTrace>,
    },

    #[error("pair is not a witness pair: a pivot exists in {side}")]
    NotAWitness { side: &'static str },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("gram cache is stale (revision {cache} vs {expected})")]
    StaleCache { cache: u64, expected: u64 },

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("grid oracle supports at most 4 vertices per body, got {0}")]
    TooManyVertices(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("feasible set is unbounded")]
    UnboundedFeasibleSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("verification failed: {}", .0.join("; "))]
    VerificationFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
