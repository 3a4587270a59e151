//! Periodic camera-timestamp modelling and multi-device capture synchronization.
//!
//! A camera streaming at a fixed rate produces capture timestamps that sit on a
//! periodic grid `t_i = phase + N_i * period + noise`, where `N_i` is the frame
//! slot (gaps in `N_i` are dropped frames). This crate provides:
//!
//! - [`model`]: traces, phase models, frame-index assignment and wrapped residuals.
//! - [`estimator`]: the finite-difference / per-cluster least-squares period
//!   estimator, phase recovery, fixed-point refinement, and a brute-force
//!   grid oracle for the underlying mixed-integer least-squares problem.
//! - [`noise`]: classification of a trace's jitter regime and a normality test.
//! - [`drift`]: train/test drift-coefficient evaluation and mode-switch checks.
//! - [`synth`]: a seeded generator of synthetic traces with known ground truth.
//! - [`sim`]: a virtual-time simulation of min-filter clock sync plus
//!   phase alignment across several devices.
//!
//! ```
//! use phasesync::estimator::{estimate, EstimateOptions};
//! use phasesync::model::TimestampTrace;
//!
//! // 30 fps stream with a 5 ms phase and one dropped frame.
//! let period = 33_333_333_i64;
//! let ts: Vec<i64> = (0..40).filter(|n| *n != 17).map(|n| 5_000_000 + n * period).collect();
//! let trace = TimestampTrace::recorded("cam0", ts).unwrap();
//!
//! let fit = estimate(&trace, &EstimateOptions::default()).unwrap();
//! assert_eq!(fit.model.period_ns(), period as f64);
//! assert_eq!(fit.model.phase_ns(), 5_000_000.0);
//! ```

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod estimator;
pub mod model;
pub mod noise;
pub mod rng;
pub mod sim;
pub mod synth;

pub use model::{FrameIndexAssignment, PhaseModel, Residuals, TimestampTrace, TraceSource};

/// Nanoseconds per minute, the denominator of every "per minute" rate in the crate.
pub const NS_PER_MIN: f64 = 60e9;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("trace needs at least 2 timestamps, got {len}")]
    EmptyTrace { len: usize },
    #[error("timestamp at index {index} is earlier than its predecessor")]
    NonMonotonic { index: usize },
    #[error("timestamp at index {index} repeats its predecessor")]
    DuplicateTimestamp { index: usize },
    #[error("period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("invalid phase model: {0}")]
    InvalidModel(String),
    #[error("timestamps {index} and its predecessor map to the same frame slot")]
    IndexCollision { index: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("seed period {seed_ns} ns maps difference {index} to zero frame slots")]
    DegenerateSeed { index: usize, seed_ns: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("frame index assignment still changing after {iterations} refinement iterations")]
    NoConvergence { iterations: usize },
    #[error("no period in [{lo_ns}, {hi_ns}] ns yields a collision-free frame assignment")]
    InfeasibleBand { lo_ns: f64, hi_ns: f64 },
    #[error("estimated period {period_ns} ns is implausible for seed {seed_ns} ns")]
    ImplausiblePeriod { period_ns: f64, seed_ns: f64 },
    #[error("trace of length {len} exceeds the exhaustive-search limit of {max}")]
    TraceTooLong { len: usize, max: usize },
    #[error("trace too short: {0}")]
    TooShort(String),
    #[error(
        "residuals jumped by more than a quarter period {count} times; drift too fast to unwrap"
    )]
    UnwrapAmbiguous { count: usize },
    #[error("invalid trace spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sync message lost")]
    MessageLost,
    #[error("no offset samples")]
    NoSamples,
    #[error("device {device} period {period_ns} ns disagrees with reference {reference_ns} ns")]
    PeriodMismatch {
        device: usize,
        period_ns: f64,
        reference_ns: f64,
    },
    #[error("session failed: {0}")]
    SessionFailed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
