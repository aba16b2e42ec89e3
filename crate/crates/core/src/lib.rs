//! Linear modes, small divisors and pure-tone time-periodic solutions of
//! one-dimensional Lagrangian gas dynamics over a fixed entropy profile.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcate;
pub mod cli;
pub mod eos;
pub mod error;
pub mod evolve;
pub mod linwave;
pub mod ode;
pub mod profile;
pub mod sl_core;
pub mod spectrum;

pub use error::{Error, Result};
