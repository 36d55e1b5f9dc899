//! Numerical toolkit for harmonic functions with weighted growth, their boundary
//! averages, dyadic martingales and a lacunary counterexample construction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averages;
pub mod counterexample;
pub mod error;
pub mod quadrature;
pub mod suites;
pub mod harmonic;
pub mod martingale;
pub mod weights;

pub use error::{Error, Result};
pub use weights::{Depth, Weight};
