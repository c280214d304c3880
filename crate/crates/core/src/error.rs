use thiserror::Error;

use crate::tree::CubeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cube {0} has no children")]
    NoChildren(CubeId),

    #[error("cube {cube} is not in a tree of branching {branching} and depth {depth}")]
    InvalidCube {
        cube: CubeId,
        branching: usize,
        depth: usize,
    },

    #[error("malformed cube id {0:?}, expected \"level:index\"")]
    MalformedCubeId(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("negative leaf mass {value} at leaf {leaf}")]
    NegativeMass { leaf: usize, value: f64 },

    #[error("non-finite or negative value {value} in {what}")]
    InvalidValue { what: &'static str, value: f64 },

    #[error("exponent must exceed 1, got {0}")]
    ExponentRange(f64),

    #[error("expected {expected} values, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("expected {expected} functions, got {actual}")]
    FunctionCount { expected: usize, actual: usize },

    #[error("slot {slot} out of range for {n} functions")]
    SlotRange { slot: usize, n: usize },

    #[error("ladder undefined: Σ1/pᵢ ≥ 1 (sum = {0})")]
    LadderUndefined(f64),

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("permutation budget exceeded: n = {0} > 6")]
    PermutationBudget(usize),

    #[error("oracle restricted to desk scale: {0}")]
    OracleTooLarge(String),

    #[error("operation requires n = {expected}, instance has n = {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("degenerate root: σ(Q₀) = 0")]
    DegenerateRoot,

    #[error("cube {0} is not a principal cube of this forest")]
    NotPrincipal(CubeId),

    #[error("cube {0} is not contained in the forest root")]
    OutsideRoot(CubeId),

    #[error("mass-free coefficient: α = {value} on σ-null cube {cube}")]
    MassFreeCoefficient { cube: CubeId, value: f64 },

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
