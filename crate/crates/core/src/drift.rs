//! Drift of a fitted phase model over a later test window.
//!
//! A model is fitted on the first `train_size` timestamps. Each timestamp of
//! the trailing `test_size` window gets its wrapped residual against that
//! model; the residuals are unwrapped by nearest-period continuation and the
//! drift coefficient is the absolute least-squares slope of unwrapped residual
//! against time, in milliseconds per minute.

use serde::{Deserialize, Serialize};

use crate::estimator::{estimate, estimate_phase, EstimateOptions};
use crate::model::{wrap, PhaseModel, TimestampTrace};
use crate::{Error, Result, NS_PER_MIN};

/// Smallest training window the estimator accepts here.
pub const MIN_TRAIN_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            train_sizes: vec![25, 50, 200],
            test_size: 1000,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.train_sizes.is_empty()
            || self.train_sizes.iter().any(|&t| t < MIN_TRAIN_SIZE)
            || self.test_size < 2
        {
            return Err(Error::InvalidArgument(format!(
                "need at least one train size, each at least {MIN_TRAIN_SIZE}, and a test size of at least 2"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub train_size: usize,
    pub test_size: usize,
    pub drift_ms_per_min: f64,
    /// Sign of the fitted slope; `+1` for a zero slope.
    pub slope_sign: i8,
    /// `(timestamp, wrapped residual)` over the test window.
    pub residual_series: Vec<(i64, f64)>,
    pub fit: PhaseModel,
}

/// Unwraps a residual series by nearest-period continuation.
///
/// Fails when two or more consecutive steps exceed a quarter period, where the
/// continuation is a guess.
pub fn unwrap_residuals(values: &[f64], period: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(values.len());
    let mut ambiguous = 0;
    for (i, &r) in values.iter().enumerate() {
        if i == 0 {
            out.push(r);
            continue;
        }
        let step = wrap(r - values[i - 1], period);
        if step.abs() > period / 4.0 {
            ambiguous += 1;
        }
        out.push(out[i - 1] + step);
    }
    if ambiguous >= 2 {
        return Err(Error::UnwrapAmbiguous { count: ambiguous });
    }
    Ok(out)
}

fn slope(x: &[i64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let x0 = x[0];
    let xs: Vec<f64> = x.iter().map(|v| (v - x0) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in xs.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

/// Drift coefficient with default estimator options.
pub fn drift_coefficient(
    trace: &TimestampTrace,
    train_size: usize,
    test_size: usize,
) -> Result<DriftReport> {
    drift_coefficient_with(trace, train_size, test_size, &EstimateOptions::default())
}

pub fn drift_coefficient_with(
    trace: &TimestampTrace,
    train_size: usize,
    test_size: usize,
    options: &EstimateOptions,
) -> Result<DriftReport> {
    let n = trace.len();
    if train_size < MIN_TRAIN_SIZE {
        return Err(Error::TooShort(format!(
            "train size {train_size} is below {MIN_TRAIN_SIZE}"
        )));
    }
    if n < train_size + 2 {
        return Err(Error::TooShort(format!(
            "trace of {n} timestamps cannot hold train size {train_size} plus 2"
        )));
    }
    if test_size < 2 || test_size > n {
        return Err(Error::TooShort(format!(
            "test size {test_size} must lie in [2, {n}]"
        )));
    }
    let train = trace.window(0, train_size)?;
    let opts = EstimateOptions {
        min_samples: options.min_samples.min(train_size),
        ..options.clone()
    };
    let fit = estimate(&train, &opts)?.model;
    let test = &trace.timestamps()[n - test_size..];
    let tau = fit.period_ns();
    let wrapped: Vec<f64> = test
        .iter()
        .map(|&t| wrap(t as f64 - fit.phase_ns(), tau))
        .collect();
    let unwrapped = unwrap_residuals(&wrapped, tau)?;
    let s = slope(test, &unwrapped);
    Ok(DriftReport {
        train_size,
        test_size,
        drift_ms_per_min: (s * NS_PER_MIN / 1e6).abs(),
        slope_sign: if s < 0.0 { -1 } else { 1 },
        residual_series: test.iter().copied().zip(wrapped).collect(),
        fit,
    })
}

/// One report per training size, all over the same trailing test window.
pub fn train_size_sweep(
    trace: &TimestampTrace,
    protocol: &EvalProtocol,
) -> Result<Vec<DriftReport>> {
    train_size_sweep_with(trace, protocol, &EstimateOptions::default())
}

pub fn train_size_sweep_with(
    trace: &TimestampTrace,
    protocol: &EvalProtocol,
    options: &EstimateOptions,
) -> Result<Vec<DriftReport>> {
    protocol.validate()?;
    protocol
        .train_sizes
        .iter()
        .map(|&k| drift_coefficient_with(trace, k, protocol.test_size, options))
        .collect()
}

/// Wrapped difference between the video trace's circular-mean phase (under the
/// model's period) and the model's phase.
pub fn mode_switch_check(
    _preview: &TimestampTrace,
    video: &TimestampTrace,
    model: &PhaseModel,
) -> Result<f64> {
    let tau = model.period_ns();
    let video_phase = estimate_phase(video, tau)?;
    Ok(wrap(video_phase - model.phase_ns(), tau))
}
