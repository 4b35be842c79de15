use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("population needs at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("treatment probability rho must lie in (0, 1), got {0}")]
    InvalidRho(f64),
    #[error("unit {index}: {reason}")]
    InvalidUnit { index: usize, reason: String },
    #[error("unit {index} has {found} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("neighborhood size {d} is outside 1..={n}")]
    InvalidNeighborhoodSize { d: usize, n: usize },
    #[error("invalid neighborhoods: {0}")]
    InvalidNeighborhoods(String),
    #[error("threshold d_min = {d_min} must lie in 1..={size}")]
    InvalidThreshold { d_min: usize, size: usize },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no effectively treated units (L = 0)")]
    NoEffectiveUnits,
    #[error("every unit is effectively treated (L = N)")]
    AllEffectiveUnits,
    #[error("variance estimate is zero (theta_hat = {theta_hat}); the normal bound is degenerate")]
    DegenerateVariance { theta_hat: f64 },
    #[error("joint probability P[{i}][{j}] is zero on an active pair")]
    ZeroJointProbability { i: usize, j: usize },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("exposure probabilities are not uniform: P(Z_{index} = 1) = {found}, expected {expected}")]
    NonUniformExposure {
        index: usize,
        expected: f64,
        found: f64,
    },
    #[error("value {value} at index {index} is negative")]
    NegativeValue { index: usize, value: f64 },
    #[error("outcome {value} at index {index} is not binary")]
    NonBinaryOutcome { index: usize, value: f64 },
    #[error("both arms need at least one unit (treated = {treated}, control = {control})")]
    EmptyArm { treated: usize, control: usize },
    #[error("significance level alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("enumeration needs N <= {max}, got {n}")]
    TooLargeForEnumeration { n: usize, max: usize },
    #[error("enrollment missing for unit {0}")]
    MissingEnrollment(usize),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration (d_min = {d_min}, d = {d}): {source}")]
    Config {
        d_min: usize,
        d: usize,
        source: Box<Error>,
    },
}
