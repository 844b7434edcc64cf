//! Design-based inference for randomized experiments.
//!
//! Potential outcomes are fixed; all randomness comes from the assignment.
//! The crate covers assignment mechanisms ([`designs`]), point estimators
//! ([`estimators`]), variance estimators and Wald inference ([`variance`]),
//! Fisher randomization tests ([`frt`]), permutation limit diagnostics
//! ([`perm`]) and a repeated-sampling harness ([`simlab`]).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod designs;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod frt;
pub mod linalg;
mod par;
pub mod perm;
pub mod science;
pub mod simlab;
pub mod variance;

pub use error::{Error, Result};

/// Version of this library, recorded in every persisted result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
