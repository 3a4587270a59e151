//! Periodic timestamping model: traces, phase models, frame indices and residuals.
//!
//! A capture timestamp is modelled as `t_i = phase + N_i * period + noise_i`.
//! Given a model, the slot `N_i` of each timestamp is recovered by rounding
//! `(t_i - phase) / period` to the nearest integer (ties go up).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where a trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Recorded,
    Synthetic,
}

/// Ordered capture timestamps (integer ns) of one device.
///
/// Always holds at least two strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampTrace {
    device_id: String,
    timestamps: Vec<i64>,
    source: TraceSource,
}

/// Checks raw timestamps and wraps them into an anonymous recorded trace.
///
/// ```
/// use phasesync::model::validate_trace;
/// use phasesync::Error;
///
/// assert_eq!(validate_trace(&[0, 33, 66]).unwrap().len(), 3);
/// assert_eq!(validate_trace(&[0, 33, 33]), Err(Error::DuplicateTimestamp { index: 2 }));
/// assert_eq!(validate_trace(&[0, 66, 33]), Err(Error::NonMonotonic { index: 2 }));
/// ```
pub fn validate_trace(raw: &[i64]) -> Result<TimestampTrace> {
    TimestampTrace::new("", raw.to_vec(), TraceSource::Recorded)
}

impl TimestampTrace {
    pub fn new(
        device_id: impl Into<String>,
        timestamps: Vec<i64>,
        source: TraceSource,
    ) -> Result<Self> {
        if timestamps.len() < 2 {
            return Err(Error::EmptyTrace {
                len: timestamps.len(),
            });
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] == w[0] {
                return Err(Error::DuplicateTimestamp { index: i + 1 });
            }
            if w[1] < w[0] {
                return Err(Error::NonMonotonic { index: i + 1 });
            }
        }
        Ok(Self {
            device_id: device_id.into(),
            timestamps,
            source,
        })
    }

    pub fn recorded(device_id: impl Into<String>, timestamps: Vec<i64>) -> Result<Self> {
        Self::new(device_id, timestamps, TraceSource::Recorded)
    }

    pub fn synthetic(device_id: impl Into<String>, timestamps: Vec<i64>) -> Result<Self> {
        Self::new(device_id, timestamps, TraceSource::Synthetic)
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn source(&self) -> TraceSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Consecutive differences `t_i - t_{i-1}`, all positive.
    pub fn diffs(&self) -> impl Iterator<Item = i64> + '_ {
        self.timestamps.windows(2).map(|w| w[1] - w[0])
    }

    /// Contiguous sub-trace `[start, end)` keeping the id and source.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{end} out of range for trace of length {}",
                self.len()
            )));
        }
        Self::new(
            self.device_id.clone(),
            self.timestamps[start..end].to_vec(),
            self.source,
        )
    }

    /// Same timestamps shifted by `offset_ns`.
    pub fn shifted(&self, offset_ns: i64) -> Self {
        Self {
            device_id: self.device_id.clone(),
            timestamps: self.timestamps.iter().map(|t| t + offset_ns).collect(),
            source: self.source,
        }
    }

    pub fn with_device_id(mut self, device_id: impl Into<String>) -> Self {
        self.device_id = device_id.into();
        self
    }
}

/// Fitted `(phase, period, noise scale)` of one camera stream.
///
/// `phase_ns` is stored normalized into `[0, period_ns)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    phase_ns: f64,
    period_ns: f64,
    noise_sigma_ns: f64,
}

impl PhaseModel {
    /// Builds a model, normalizing the phase modulo the period.
    ///
    /// ```
    /// use phasesync::PhaseModel;
    /// let m = PhaseModel::new(-3.0, 10.0, 0.0).unwrap();
    /// assert_eq!(m.phase_ns(), 7.0);
    /// ```
    pub fn new(phase_ns: f64, period_ns: f64, noise_sigma_ns: f64) -> Result<Self> {
        check_period(period_ns)?;
        if !phase_ns.is_finite() {
            return Err(Error::InvalidModel(format!(
                "phase {phase_ns} is not finite"
            )));
        }
        if !(noise_sigma_ns >= 0.0) || !noise_sigma_ns.is_finite() {
            return Err(Error::InvalidModel(format!(
                "noise sigma {noise_sigma_ns} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            phase_ns: normalize_phase(phase_ns, period_ns),
            period_ns,
            noise_sigma_ns,
        })
    }

    pub fn phase_ns(&self) -> f64 {
        self.phase_ns
    }

    pub fn period_ns(&self) -> f64 {
        self.period_ns
    }

    pub fn noise_sigma_ns(&self) -> f64 {
        self.noise_sigma_ns
    }

    pub fn with_noise_sigma(self, noise_sigma_ns: f64) -> Result<Self> {
        Self::new(self.phase_ns, self.period_ns, noise_sigma_ns)
    }

    /// Predicted capture instant of slot `n`.
    pub fn predict(&self, n: i64) -> f64 {
        self.phase_ns + n as f64 * self.period_ns
    }
}

pub(crate) fn check_period(period_ns: f64) -> Result<()> {
    if period_ns > 0.0 && period_ns.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositivePeriod(period_ns))
    }
}

/// Maps `phase` into `[0, period)`.
pub fn normalize_phase(phase: f64, period: f64) -> f64 {
    let r = phase.rem_euclid(period);
    // rem_euclid can round up to exactly `period` for tiny negative inputs.
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Maps `value` into `[-period/2, period/2)`, congruent modulo `period`.
///
/// ```
/// use phasesync::model::wrap;
/// assert_eq!(wrap(6.0, 10.0), -4.0);
/// assert_eq!(wrap(-5.0, 10.0), -5.0);
/// assert_eq!(wrap(5.0, 10.0), -5.0);
/// ```
pub fn wrap(value: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    let r = (value + half).rem_euclid(period) - half;
    if r >= half {
        r - period
    } else if r < -half {
        -half
    } else {
        r
    }
}

/// Nearest grid slot of `t` for period `tau`: `floor(t / tau + 0.5)`.
///
/// Exact halves resolve upward.
///
/// ```
/// use phasesync::model::assign_frame_index;
/// assert_eq!(assign_frame_index(25e6, 10e6).unwrap(), 3);
/// assert_eq!(assign_frame_index(0.0, 7.0).unwrap(), 0);
/// assert!(assign_frame_index(1.0, 0.0).is_err());
/// ```
pub fn assign_frame_index(t: f64, tau: f64) -> Result<i64> {
    check_period(tau)?;
    Ok(slot(t, tau))
}

#[inline]
pub(crate) fn slot(t: f64, tau: f64) -> i64 {
    (t / tau + 0.5).floor() as i64
}

/// Integer frame slots of a trace under a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndexAssignment {
    indices: Vec<i64>,
    tau_used_ns: f64,
}

impl FrameIndexAssignment {
    /// Wraps a strictly increasing index sequence.
    pub fn new(indices: Vec<i64>, tau_used_ns: f64) -> Result<Self> {
        check_period(tau_used_ns)?;
        if let Some(i) = indices.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::IndexCollision { index: i + 1 });
        }
        Ok(Self {
            indices,
            tau_used_ns,
        })
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn tau_used_ns(&self) -> f64 {
        self.tau_used_ns
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Slot gaps `N_i - N_{i-1}`; anything above 1 is a dropped frame.
    pub fn gaps(&self) -> Vec<i64> {
        self.indices.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Indices re-based so the first one is 0.
    pub fn relative(&self) -> Vec<i64> {
        let first = self.indices.first().copied().unwrap_or(0);
        self.indices.iter().map(|n| n - first).collect()
    }
}

/// Assigns each timestamp to its nearest slot of the model's grid.
///
/// Fails with [`Error::IndexCollision`] when two timestamps round into the
/// same slot, which happens when the period is grossly too large.
pub fn assign_indices(trace: &TimestampTrace, model: &PhaseModel) -> Result<FrameIndexAssignment> {
    let tau = model.period_ns();
    let phase = model.phase_ns();
    let indices = trace
        .timestamps()
        .iter()
        .map(|&t| slot(t as f64 - phase, tau))
        .collect();
    FrameIndexAssignment::new(indices, tau)
}

/// Wrapped model residuals `t_i - (phase + N_i * period)` in `[-period/2, period/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    values: Vec<f64>,
}

impl Residuals {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Residuals of a trace against a model under a given slot assignment.
pub fn residuals(
    trace: &TimestampTrace,
    model: &PhaseModel,
    assignment: &FrameIndexAssignment,
) -> Result<Residuals> {
    if assignment.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            actual: assignment.len(),
        });
    }
    let tau = model.period_ns();
    let values = trace
        .timestamps()
        .iter()
        .zip(assignment.indices())
        .map(|(&t, &n)| wrap(raw_residual(t, n, model), tau))
        .collect();
    Ok(Residuals { values })
}

#[inline]
fn raw_residual(t: i64, n: i64, model: &PhaseModel) -> f64 {
    (t as f64 - model.phase_ns()) - n as f64 * model.period_ns()
}

/// Unwrapped least-squares objective `sum (phase + N_i * period - t_i)^2`.
pub fn objective(trace: &TimestampTrace, model: &PhaseModel, indices: &[i64]) -> Result<f64> {
    if indices.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            actual: indices.len(),
        });
    }
    Ok(trace
        .timestamps()
        .iter()
        .zip(indices)
        .map(|(&t, &n)| {
            let r = raw_residual(t, n, model);
            r * r
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(ts: &[i64]) -> TimestampTrace {
        validate_trace(ts).unwrap()
    }

    #[test]
    fn validate_rejects_short() {
        assert_eq!(validate_trace(&[]), Err(Error::EmptyTrace { len: 0 }));
        assert_eq!(validate_trace(&[5]), Err(Error::EmptyTrace { len: 1 }));
    }

    #[test]
    fn validate_reports_first_offender() {
        assert_eq!(
            validate_trace(&[0, 10, 5, 5]),
            Err(Error::NonMonotonic { index: 2 })
        );
        assert_eq!(
            validate_trace(&[0, 10, 10, 5]),
            Err(Error::DuplicateTimestamp { index: 2 })
        );
    }

    #[test]
    fn frame_index_examples() {
        assert_eq!(assign_frame_index(25e6, 10e6).unwrap(), 3);
        assert_eq!(assign_frame_index(0.0, 33.0).unwrap(), 0);
        assert_eq!(assign_frame_index(99.0, 33.0).unwrap(), 3);
        assert_eq!(
            assign_frame_index(1.0, -1.0),
            Err(Error::NonPositivePeriod(-1.0))
        );
        assert!(assign_frame_index(1.0, f64::NAN).is_err());
    }

    #[test]
    fn frame_index_half_goes_up() {
        assert_eq!(assign_frame_index(5.0, 10.0).unwrap(), 1);
        assert_eq!(assign_frame_index(-5.0, 10.0).unwrap(), 0);
        assert_eq!(assign_frame_index(15.0, 10.0).unwrap(), 2);
    }

    #[test]
    fn assign_on_grid_and_with_drop() {
        let m = PhaseModel::new(5.0, 33.0, 0.0).unwrap();
        let t = trace(&[5, 38, 71, 104]);
        assert_eq!(assign_indices(&t, &m).unwrap().indices(), &[0, 1, 2, 3]);
        let t = trace(&[5, 38, 71, 137]);
        let a = assign_indices(&t, &m).unwrap();
        assert_eq!(a.indices(), &[0, 1, 2, 4]);
        assert_eq!(a.gaps(), vec![1, 1, 2]);
    }

    #[test]
    fn assign_half_period_does_not_collide() {
        // True period 10, model period 5: every sample lands on an even slot
        // with zero residual; the misfit shows only as the uniform gap of 2.
        let t = trace(&[0, 10, 20, 30, 40]);
        let m = PhaseModel::new(0.0, 5.0, 0.0).unwrap();
        let a = assign_indices(&t, &m).unwrap();
        assert_eq!(a.indices(), &[0, 2, 4, 6, 8]);
        let r = residuals(&t, &m, &a).unwrap();
        assert!(r.values().iter().all(|v| *v == 0.0));
        assert!(a.gaps().iter().all(|g| *g == 2));
    }

    #[test]
    fn assign_double_period_collides() {
        let t = trace(&[0, 10, 20, 30]);
        let m = PhaseModel::new(0.0, 20.0, 0.0).unwrap();
        assert_eq!(
            assign_indices(&t, &m),
            Err(Error::IndexCollision { index: 2 })
        );
    }

    #[test]
    fn residual_examples() {
        let m = PhaseModel::new(2_000_000.0, 10_000_000.0, 0.0).unwrap();
        let t = trace(&[2_000_000, 12_300_000, 22_000_000]);
        let a = assign_indices(&t, &m).unwrap();
        let r = residuals(&t, &m, &a).unwrap();
        assert_eq!(r.values(), &[0.0, 300_000.0, 0.0]);

        // 0.6 of a period past slot 1 is 0.4 before slot 2.
        let t = trace(&[2_000_000, 18_000_000]);
        let a = assign_indices(&t, &m).unwrap();
        assert_eq!(a.indices(), &[0, 2]);
        let r = residuals(&t, &m, &a).unwrap();
        assert_eq!(r.values()[1], -4_000_000.0);
        // Same answer when handed the stale slot.
        let stale = FrameIndexAssignment::new(vec![0, 1], 10_000_000.0).unwrap();
        assert_eq!(residuals(&t, &m, &stale).unwrap().values()[1], -4_000_000.0);
    }

    #[test]
    fn residual_length_mismatch() {
        let m = PhaseModel::new(0.0, 10.0, 0.0).unwrap();
        let t = trace(&[0, 10, 20]);
        let a = FrameIndexAssignment::new(vec![0, 1], 10.0).unwrap();
        assert_eq!(
            residuals(&t, &m, &a),
            Err(Error::LengthMismatch {
                expected: 3,
                actual: 2
            })
        );
    }

    #[test]
    fn model_rejects_bad_values() {
        assert!(PhaseModel::new(0.0, 0.0, 0.0).is_err());
        assert!(PhaseModel::new(f64::INFINITY, 1.0, 0.0).is_err());
        assert!(PhaseModel::new(0.0, 1.0, -1.0).is_err());
        assert_eq!(PhaseModel::new(-1e-20, 10.0, 0.0).unwrap().phase_ns(), 0.0);
    }

    proptest! {
        #[test]
        fn on_grid_index_is_identity(n in 0i64..1_000_000, tau in 1.0f64..1e8) {
            prop_assert_eq!(assign_frame_index(n as f64 * tau, tau).unwrap(), n);
        }

        #[test]
        fn wrap_range_and_congruence(r in -1e9f64..1e9, tau in 1.0f64..1e8) {
            let w = wrap(r, tau);
            prop_assert!(w >= -tau / 2.0 && w < tau / 2.0);
            let k = (r - w) / tau;
            prop_assert!((k - k.round()).abs() < 1e-6);
        }

        #[test]
        fn residual_squares_match_objective(
            phase in 0.0f64..33e6,
            tau in 30e6f64..36e6,
            noise in proptest::collection::vec(-5e6f64..5e6, 2..60),
        ) {
            let m = PhaseModel::new(phase, tau, 0.0).unwrap();
            let mut ts: Vec<i64> = noise
                .iter()
                .enumerate()
                .map(|(i, e)| (phase + i as f64 * tau + e).round() as i64)
                .collect();
            ts.dedup();
            prop_assume!(ts.len() >= 2);
            let t = validate_trace(&ts).unwrap();
            let a = assign_indices(&t, &m).unwrap();
            let ss = residuals(&t, &m, &a).unwrap().sum_of_squares();
            let obj = objective(&t, &m, a.indices()).unwrap();
            prop_assert!((ss - obj).abs() <= 1e-9 * obj.max(1.0));
            prop_assert!(residuals(&t, &m, &a).unwrap().max_abs() <= tau / 2.0);
        }
    }
}
