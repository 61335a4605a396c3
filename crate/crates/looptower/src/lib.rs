//! Partition functions of small discrete graphical models in Forney form
//! (variables on edges, factors on vertices), computed three ways and
//! cross-checked against each other:
//!
//! * brute-force enumeration ([`exact`]),
//! * belief propagation as a gauge-fixing condition ([`bp`], [`gauge`]),
//! * the loop-series / loop-tower decompositions that rebuild the exact
//!   partition function from a BP fixed point ([`loops`], [`tower`]).
//!
//! The [`bethe`] module ties the BP functional to the Bethe free energy,
//! and [`cli`] drives everything from JSON model documents.
//!
//! Everything here is desk scale by design: models are dense, enumeration
//! guards refuse anything that cannot be verified exactly.

pub mod bethe;
pub mod bp;
pub mod cli;
pub mod exact;
pub mod fixtures;
pub mod gauge;
pub mod loops;
pub mod model;
pub mod report;
pub mod tower;

use thiserror::Error;

pub use model::{ModelSpec, parse_model, serialize_model};

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model parse error: {0}")]
    Parse(String),

    #[error("model validation failed:\n{0}")]
    Validation(model::Diagnostics),

    #[error("enumeration guard exceeded: {terms} terms (limit {limit})")]
    GuardExceeded { terms: u128, limit: u128 },

    #[error("gauge duality residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    DualityViolation { residual: f64, tol: f64 },

    #[error("belief propagation did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate gauge on edge {edge}: {reason}")]
    DegenerateGauge { edge: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
