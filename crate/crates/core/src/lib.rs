//! Simulation and analysis of relative-intensity squeezed nanosecond pulses
//! generated by four-wave mixing in a pumped double-lambda vapour.
//!
//! The pipeline runs `medium` (coupled-mode propagation through the cell) ->
//! `gaussian` (covariance algebra, intensity-difference noise) -> `detection`
//! (pulse spectra, detection-band weighting, Monte Carlo records), with
//! `sweep` for parameter scans and calibration and `cli` as the front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detection;
pub mod error;
pub mod gaussian;
pub mod medium;
pub mod sweep;

pub use error::{Error, Result};
