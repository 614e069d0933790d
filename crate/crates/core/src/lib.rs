//! Recursive analog beam tracking for uniform linear phased arrays.
//!
//! The crate models a single-path channel observed through an analog
//! (phase-shifter only) beamformer, tracks its direction with a
//! low-complexity stochastic-approximation recursion, and benchmarks the
//! tracker against Cramér-Rao bounds and four reference algorithms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod array;
pub mod baselines;
pub mod crlb;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod stats;
pub mod trackers;

pub use error::{Error, Result};
