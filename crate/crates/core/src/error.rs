//! Crate-wide error type.

use thiserror::Error;

/// Failure modes of every operation in the crate.
///
/// [`Error::kind`] returns a stable kebab-case tag that the command line
/// front end prints and that tests match on.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("cylinder does not intersect the grid")]
    EmptyIntersection,

    #[error("bad magic bytes, expected PGRD")]
    BadMagic,

    #[error("unsupported format version {found}")]
    VersionMismatch { found: u32 },

    #[error("dimension mismatch: {0}")]
    DimsMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("averaging length {h} outside (0, {max})")]
    HOutOfRange { h: f64, max: f64 },

    #[error("weight violates precondition: {0}")]
    WeightViolatesPrecondition(String),

    #[error("exponent constraint violated: {0}")]
    ExponentConstraintViolated(String),

    #[error("zero set of the test function is empty")]
    ZeroSetEmpty,

    #[error("closed set has empty complement on the grid")]
    EmptyComplement,

    #[error("invalid exponent ladder: {0}")]
    InvalidExponentLadder(String),

    #[error("infeasible ladder: {0}")]
    InfeasibleLadder(String),

    #[error("cylinder does not cross the initial time")]
    CylinderDoesNotCrossInitialTime,

    #[error("newton iteration diverged at time step {step} (last residual {last_residual:e})")]
    NewtonDivergence {
        step: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
        last_iterate: Vec<f64>,
    },

    #[error("iterative solver did not converge: {0}")]
    NotConverged(String),

    #[error("intrinsic scaling assumption violated on the {side} side (ratio {ratio:.4e} > {bound})")]
    Alpha0AssumptionViolated {
        side: &'static str,
        ratio: f64,
        bound: f64,
    },

    #[error("iteration hypothesis violated at samples t1={t1}, t2={t2}")]
    HypothesisViolatedOnSamples { t1: f64, t2: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid-params",
            Error::EmptyIntersection => "empty-intersection",
            Error::BadMagic => "bad-magic",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::DimsMismatch(_) => "dims-mismatch",
            Error::Io(_) => "io",
            Error::HOutOfRange { .. } => "h-out-of-range",
            Error::WeightViolatesPrecondition(_) => "weight-violates-precondition",
            Error::ExponentConstraintViolated(_) => "exponent-constraint-violated",
            Error::ZeroSetEmpty => "zero-set-empty",
            Error::EmptyComplement => "empty-complement",
            Error::InvalidExponentLadder(_) => "invalid-exponent-ladder",
            Error::InfeasibleLadder(_) => "infeasible-ladder",
            Error::CylinderDoesNotCrossInitialTime => "cylinder-does-not-cross-initial-time",
            Error::NewtonDivergence { .. } => "newton-divergence",
            Error::NotConverged(_) => "not-converged",
            Error::Alpha0AssumptionViolated { .. } => "alpha0-assumption-violated",
            Error::HypothesisViolatedOnSamples { .. } => "hypothesis-violated-on-samples",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
