use thiserror::Error;

/// Errors raised by instance validation and the solvers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("duplicate support point {0} in marginal {1}")]
    DuplicateSupport(String, usize),
    #[error("mixing weight t = {0} is not admissible here")]
    BadT(String),
    #[error("empty input")]
    EmptyInput,
    #[error("grid of {size} points exceeds the cap of {cap}")]
    GridTooLarge { size: String, cap: usize },
    #[error("{count} atoms exceed the enumeration cap of {cap}")]
    TooManyAtoms { count: String, cap: usize },
    #[error("exact mode requires an even integer exponent, got p = {0}")]
    OddPExact(String),
    #[error("point is not an atom of the distribution")]
    NotAnAtom,
    #[error("all knapsack weights are zero")]
    ZeroWeights,
    #[error("cannot parse {0:?}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
