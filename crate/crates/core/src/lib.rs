//! Max-of-maximum Skorokhod embeddings for atomic target laws.
//!
//! The crate builds the convex potential `c(x) = E|X - x| + |m|` of a finite
//! atomic target, compiles the stopping rules derived from its tangents
//! (`T_max`, its reflection `T_min`, and the two-stage modulus rule `T_mod`),
//! simulates them in Brownian motion or in a one-dimensional diffusion via
//! its scale function, and checks the resulting samples against the target
//! law, the sharp bound on the law of the maximum, and minimality diagnostics.
//!
//! Layout:
//! - [`measure`]: atomic target laws.
//! - [`potential`]: the potential, tangent frames, barrier and bound.
//! - [`rules`]: executable stopping rules.
//! - [`simulate`]: exact event-driven and Euler path engines.
//! - [`diffusion`]: scale functions and embeddability.
//! - [`verify`]: statistical checks.
//! - [`exprlang`]: the expression language for user functions.
//! - [`cli`]: configuration-driven experiments.

pub mod cli;
pub mod diffusion;
pub mod exprlang;
pub mod format;
pub mod measure;
pub mod potential;
pub mod rules;
pub mod scalar;
pub mod simulate;
pub mod verify;

pub use measure::TargetMeasure;
pub use potential::{PotentialFunction, TangentFrame};
pub use rules::{Decision, RuleState, StoppingRule};
pub use scalar::ScalarFunction;
pub use simulate::{SampleRecord, SampleSet};

use thiserror::Error;

/// Errors raised by the library. Per-path failures (censoring, leaving the
/// scale table) are recorded on the samples instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("target measure has no atoms")]
    EmptyMeasure,
    #[error("atom at {value} has non-positive weight {weight}")]
    NegativeWeight { value: f64, weight: f64 },
    #[error("quantile split mismatch: p = {p} is not in [{lower}, {upper}] at u = {u}")]
    QuantileMismatch { p: f64, u: f64, lower: f64, upper: f64 },
    #[error("atom {value} lies outside the scale table domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("value {value} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("no slope in [-1, 1] satisfies the crossing condition")]
    NoCrossing,
    #[error("target mean {mean} is negative; the modulus rule needs a non-negative mean")]
    MeanSignError { mean: f64 },
    #[error("segment ({lower}, {upper}) is unbounded on both sides")]
    UnboundedSegment { lower: f64, upper: f64 },
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("scale quadrature overflows at x = {x}")]
    QuadratureOverflow { x: f64 },
    #[error("scale function is not strictly increasing near x = {x}")]
    NotMonotone { x: f64 },
    #[error("no uncensored samples")]
    NoSamples,
    #[error("orientation {requested} does not match target mean {mean}")]
    WrongOrientation { requested: &'static str, mean: f64 },
    #[error(transparent)]
    Syntax(#[from] exprlang::SyntaxError),
    #[error(transparent)]
    Eval(#[from] exprlang::EvalError),
    #[error("invalid diffusion: {0}")]
    InvalidDiffusion(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
