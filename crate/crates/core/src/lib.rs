//! Numerical laboratory for two-point gradient estimates of quasilinear
//! parabolic equations on backgrounds satisfying `d/dt g >= -2 Ric`.
//!
//! The pipeline is geometry -> equations -> solver -> barrier -> verify,
//! driven from a line-oriented experiment file by [`config`] and [`runner`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod config;
pub mod equations;
pub mod error;
pub mod geometry;
pub mod report;
pub mod runner;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
