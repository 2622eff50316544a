//! Simulation and exact-computation laboratory for random walks in i.i.d.
//! random environments (RWRE) on the integer lattice, d in {1, 2, 3}.
//!
//! The crate provides lazily realized uniformly elliptic environments,
//! quenched/annealed walk drivers with composable stopping rules,
//! regeneration-time detection and diagnostics, two-walk intersection
//! counting, exact heat-kernel dynamic programming (environment viewed from
//! the particle, torus stationary measures, local CLT probes), planted-trap
//! constructions, and a deterministic experiment harness with CSV output.
//!
//! Numeric code is generic over [`Scalar`]; the harness instantiates
//! everything at [`Real`]. Exact rational arithmetic ([`Rational`]) is used
//! where a yes/no answer must not depend on rounding (the nestling test).

pub mod clt;
pub mod config;
pub mod env;
pub mod experiments;
pub mod geometry;
pub mod hull;
pub mod intersect;
pub mod kernel;
pub mod lattice;
pub mod regen;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod table;
pub mod torus;
pub mod traps;
pub mod walk;

pub use scalar::Scalar;

/// Concrete scalar used by the experiment harness and the CLI.
pub type Real = f64;

/// Arbitrary-precision rational, used for exact geometric predicates.
/// Conversion from `f64` is lossless, so predicates on floating inputs are
/// decided without rounding ambiguity.
pub type Rational = num_rational::BigRational;

/// Crate-wide error type. The CLI maps variants to exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid probability vector or law parameters.
    #[error("invalid distribution: {0}")]
    Distribution(String),
    /// A sampled or constructed distribution violates declared ellipticity.
    #[error("ellipticity violation: min entry {min} < kappa {kappa}")]
    Ellipticity { min: f64, kappa: f64 },
    /// Configuration file problem, with 1-based line number where known.
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    /// Malformed result-table file, with 1-based line number.
    #[error("table line {line}: {msg}")]
    Table { line: usize, msg: String },
    /// A resource guard refused to run the request.
    #[error("resource guard [{guard}]: {msg}")]
    Guard { guard: &'static str, msg: String },
    /// Geometry or experiment parameters out of the supported range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
