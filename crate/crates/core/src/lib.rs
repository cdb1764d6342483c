//! Certified likelihood-informed dimension reduction for Bayesian inverse
//! problems.
//!
//! The crate estimates the diagnostic matrix `H = ∫ ∇log f ∇log fᵀ dρ`,
//! extracts the leading eigenspace of the pencil `(H, Γ)` with `Γ` the prior
//! precision, replaces the likelihood by a ridge function of the projected
//! parameter, and certifies the resulting posterior approximation with a
//! Kullback–Leibler bound `κ/2 · Σ_{i>r} λᵢ`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod elliptic;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod problem;
pub mod ridge;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use nalgebra;
