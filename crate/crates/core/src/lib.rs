//! Numerical laboratory for late-time decay of linear waves on Schwarzschild
//! and slowly rotating Kerr backgrounds.
//!
//! - [`geometry`]: Kerr metric, horizons, tortoise coordinate, trapped set, slicings.
//! - [`reduction`]: mode potentials and the radial quadrature solution of `□v = H`.
//! - [`evolver`]: 1+1 mode evolution in `(t, r*)` with observers and snapshots.
//! - [`analysis`]: dyadic local energy norms, vector fields, commutators, Sobolev checks.
//! - [`tailfit`]: local power indices, decay fits and cone envelopes.
//! - [`runner`]: configured pipelines, run directories, sweeps and self-tests.
//!
//! Each capability has a runnable example under `examples/`, for instance
//! `cargo run --release --example price_tail`.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod evolver;
pub mod geometry;
pub mod plot;
pub mod quadrature;
pub mod reduction;
pub mod runner;
pub mod tailfit;

pub use error::{Error, Result};
