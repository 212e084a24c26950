//! Semigroup envelopes of families of linear convolution semigroups on a discretized
//! L^p(ℝ), built with the Nisio partition construction and checked against independent
//! oracles (an upwind HJB solver and an RK4 integrator for bounded generators).

// `!(x > 0.0)` rejects NaN together with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod funcspace;
pub mod kernels;
pub mod reference;

pub use error::{Error, Result};
