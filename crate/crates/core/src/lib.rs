//! Discrete-event Monte Carlo simulation of photonic entanglement swapping
//! over a lossy free-space link, together with the time-tag processing and
//! entanglement-verification statistics needed to analyze its output.
//!
//! The crate is organized bottom-up:
//!
//! - [`qstate`]: exact polarization-state algebra for up to four photons.
//! - [`source`]: pulsed pair-source models (multi-pair statistics, HOM overlap).
//! - [`link`]: channel loss, detectors, dark counts and recorder clocks.
//! - [`tagstream`]: Bell-state-measurement logic, coincidences and clock sync.
//! - [`stats`]: visibilities, entanglement witness, CHSH and error estimates.
//! - [`sim`], [`config`], [`report`], [`tagfile`], [`sweep`]: the batch harness.

pub mod config;
pub mod error;
pub mod link;
pub mod pipeline;
pub mod qstate;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod sim;
pub mod source;
pub mod stats;
pub mod sweep;
pub mod tagfile;
pub mod tagstream;

pub use error::{Error, Result};

/// Speed of light in vacuum, metres per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
