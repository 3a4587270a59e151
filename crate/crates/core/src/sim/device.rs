//! Simulated devices: a drifting local clock plus a periodic camera.
//!
//! Camera grids live on true (simulation) time. A device reads its local clock
//! as `true + offset + skew * true / 60e9`, so recorded timestamps carry both
//! the clock error and per-frame timestamping jitter.

use serde::{Deserialize, Serialize};

use crate::model::{normalize_phase, PhaseModel};
use crate::rng::DetRng;
use crate::{Error, Result, NS_PER_MIN};

/// One frame interval stretched by `extra_ns`; every capture from `slot` on is
/// delayed by that amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameExtension {
    pub slot: i64,
    pub extra_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub period_ns: f64,
    /// Phase of slot 0 in true time, before any extension.
    pub phase_ns: f64,
    pub jitter_sigma_ns: f64,
    pub drop_prob: f64,
    pub extensions: Vec<FrameExtension>,
}

impl SimCamera {
    pub fn new(period_ns: f64, phase_ns: f64) -> Self {
        Self {
            period_ns,
            phase_ns,
            jitter_sigma_ns: 0.0,
            drop_prob: 0.0,
            extensions: Vec::new(),
        }
    }

    pub fn with_jitter(mut self, sigma_ns: f64) -> Self {
        self.jitter_sigma_ns = sigma_ns;
        self
    }

    pub fn with_drop_prob(mut self, p: f64) -> Self {
        self.drop_prob = p;
        self
    }

    /// True capture instant of slot `k`.
    pub fn instant(&self, k: i64) -> f64 {
        let extra: f64 = self
            .extensions
            .iter()
            .filter(|e| e.slot <= k)
            .map(|e| e.extra_ns)
            .sum();
        self.phase_ns + k as f64 * self.period_ns + extra
    }

    /// First slot captured at or after true time `t`.
    pub fn first_slot_at_or_after(&self, t: f64) -> i64 {
        let mut k = ((t - self.phase_ns) / self.period_ns).ceil() as i64;
        while self.instant(k) < t {
            k += 1;
        }
        while self.instant(k - 1) >= t {
            k -= 1;
        }
        k
    }

    /// Current phase after all extensions, in `[0, period)`.
    pub fn effective_phase(&self) -> f64 {
        let extra: f64 = self.extensions.iter().map(|e| e.extra_ns).sum();
        normalize_phase(self.phase_ns + extra, self.period_ns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDevice {
    pub device_id: String,
    pub true_clock_offset_ns: f64,
    pub true_skew_ns_per_min: f64,
    pub camera: SimCamera,
    pub estimated_offset_ns: Option<f64>,
}

/// A captured frame: true instant and the device's local timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capture {
    pub slot: i64,
    pub true_ns: f64,
    pub local_ns: i64,
}

impl SimDevice {
    pub fn new(device_id: impl Into<String>, offset_ns: f64, camera: SimCamera) -> Self {
        Self {
            device_id: device_id.into(),
            true_clock_offset_ns: offset_ns,
            true_skew_ns_per_min: 0.0,
            camera,
            estimated_offset_ns: None,
        }
    }

    pub fn with_skew(mut self, ns_per_min: f64) -> Self {
        self.true_skew_ns_per_min = ns_per_min;
        self
    }

    /// Local clock reading at true time `t`.
    pub fn local_time(&self, t: f64) -> f64 {
        t + self.true_clock_offset_ns + self.true_skew_ns_per_min * t / NS_PER_MIN
    }

    /// Records `slots` consecutive camera slots starting at true time `from_ns`.
    ///
    /// Per slot: one uniform for the drop decision, then for kept slots one
    /// normal for the timestamp jitter, redrawn while it would break ordering.
    pub fn record(&self, from_ns: f64, slots: usize, rng: &mut DetRng) -> Vec<Capture> {
        let cam = &self.camera;
        let first = cam.first_slot_at_or_after(from_ns);
        let mut out: Vec<Capture> = Vec::with_capacity(slots);
        for k in first..first + slots as i64 {
            if rng.uniform() < cam.drop_prob {
                continue;
            }
            let true_ns = cam.instant(k);
            let base = self.local_time(true_ns);
            let local_ns = loop {
                let jitter = if cam.jitter_sigma_ns > 0.0 {
                    cam.jitter_sigma_ns * rng.gaussian()
                } else {
                    0.0
                };
                let ts = (base + jitter).round() as i64;
                if out.last().map_or(true, |c| ts > c.local_ns) {
                    break ts;
                }
            };
            out.push(Capture {
                slot: k,
                true_ns,
                local_ns,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPlan {
    pub period_ns: f64,
    pub target_phase_ns: f64,
    /// Per-device delay in `[0, period)`.
    pub shifts_ns: Vec<f64>,
}

/// Relative period tolerance of [`plan_alignment`].
pub const PLAN_PERIOD_TOLERANCE: f64 = 1e-4;

/// Shifts `(target - phase_d) mod period` that move every model onto the target
/// phase. The first model's period is the reference.
///
/// ```
/// use phasesync::sim::plan_alignment;
/// use phasesync::PhaseModel;
/// let m = PhaseModel::new(10e6, 33e6, 0.0).unwrap();
/// let plan = plan_alignment(&[m], 2e6).unwrap();
/// assert_eq!(plan.shifts_ns, vec![25e6]);
/// ```
pub fn plan_alignment(models: &[PhaseModel], target_phase_ns: f64) -> Result<AlignmentPlan> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("no device models to align".into()))?;
    let tau = first.period_ns();
    for (d, m) in models.iter().enumerate() {
        if (m.period_ns() - tau).abs() > PLAN_PERIOD_TOLERANCE * tau {
            return Err(Error::PeriodMismatch {
                device: d,
                period_ns: m.period_ns(),
                reference_ns: tau,
            });
        }
    }
    if !target_phase_ns.is_finite() {
        return Err(Error::InvalidArgument("target phase must be finite".into()));
    }
    let shifts_ns = models
        .iter()
        .map(|m| normalize_phase(target_phase_ns - m.phase_ns(), tau))
        .collect();
    Ok(AlignmentPlan {
        period_ns: tau,
        target_phase_ns: normalize_phase(target_phase_ns, tau),
        shifts_ns,
    })
}

/// Stretches the first frame interval ending at or after true time `at_ns`
/// by `delta_ns`, moving every later capture by that amount.
pub fn apply_alignment(device: &SimDevice, delta_ns: f64, at_ns: f64) -> Result<SimDevice> {
    let tau = device.camera.period_ns;
    if !(delta_ns >= 0.0 && delta_ns < tau) {
        return Err(Error::InvalidArgument(format!(
            "shift {delta_ns} ns outside [0, {tau})"
        )));
    }
    let mut out = device.clone();
    if delta_ns > 0.0 {
        let slot = out.camera.first_slot_at_or_after(at_ns);
        out.camera.extensions.push(FrameExtension {
            slot,
            extra_ns: delta_ns,
        });
    }
    Ok(out)
}
