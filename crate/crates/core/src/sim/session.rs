//! End-to-end session: sync, preview fit, alignment, video skew.
//!
//! Timeline in true time (`tau` is the common camera period):
//!
//! 1. From `t = 0`, each non-leader device in turn runs `n_exchanges`
//!    successful exchanges spaced `exchange_interval_ns` apart. A lost
//!    exchange is retried at the next slot; more than `max_retries`
//!    consecutive losses fail the session.
//! 2. Preview starts at the next whole period after the last exchange. Each
//!    device records `train_frames` slots. Timestamps are moved into the
//!    leader domain by subtracting the estimated offset and a shared epoch at
//!    the middle of the preview window, then fitted.
//! 3. Devices share one period, so the per-device periods are checked to agree
//!    within `period_tolerance` and pooled by averaging; each device's phase is
//!    then re-fitted under the pooled period.
//! 4. Shifts toward the leader's phase are planned (optionally rounded to
//!    `exposure_quantum_ns`) and applied two periods after the preview ends.
//! 5. Video starts two periods later. Capture skew is measured on the true
//!    capture instants of `video_frames` corresponding slots, wrapped into
//!    `[0, tau/2]`, so offset estimation error shows up in the skew.
//!
//! Camera draws come from a stream seeded with `config.seed`, exchange draws
//! from one seeded with the network's seed.

use serde::{Deserialize, Serialize};

use super::device::{apply_alignment, plan_alignment, SimDevice};
use super::network::{min_filter_offset, Network, NetworkModel};
use crate::estimator::{estimate, phase_for_period, EstimateOptions};
use crate::model::{normalize_phase, wrap, PhaseModel, TimestampTrace};
use crate::rng::DetRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_exchanges: usize,
    pub exchange_interval_ns: f64,
    pub max_retries: usize,
    pub train_frames: usize,
    pub video_frames: usize,
    /// Relative spread allowed between per-device period estimates.
    pub period_tolerance: f64,
    pub exposure_quantum_ns: Option<f64>,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_exchanges: 100,
            exchange_interval_ns: 20e6,
            max_retries: 10,
            train_frames: 50,
            video_frames: 1350,
            period_tolerance: 5e-4,
            exposure_quantum_ns: None,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_exchanges == 0 {
            return bad("n_exchanges must be positive");
        }
        if !(self.exchange_interval_ns > 0.0 && self.exchange_interval_ns.is_finite()) {
            return bad("exchange_interval_ns must be positive");
        }
        if self.train_frames < 3 {
            return bad("train_frames must be at least 3");
        }
        if self.video_frames == 0 {
            return bad("video_frames must be positive");
        }
        if !(self.period_tolerance > 0.0) {
            return bad("period_tolerance must be positive");
        }
        if let Some(q) = self.exposure_quantum_ns {
            if !(q > 0.0 && q.is_finite()) {
                return bad("exposure_quantum_ns must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSkew {
    pub a: usize,
    pub b: usize,
    /// Largest wrapped distance between corresponding video captures.
    pub skew_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub device_ids: Vec<String>,
    pub estimated_offsets_ns: Vec<f64>,
    /// Estimated minus true offset relative to the leader at preview start.
    pub offset_errors_ns: Vec<f64>,
    pub period_ns: f64,
    /// Leader-domain phases fitted on the preview.
    pub phases_ns: Vec<f64>,
    pub shifts_ns: Vec<f64>,
    pub pairwise: Vec<PairSkew>,
    /// Exchanges attempted, lost ones included.
    pub rounds_used: u64,
    pub messages_lost: u64,
}

impl SyncReport {
    pub fn max_skew_ns(&self) -> f64 {
        self.pairwise.iter().fold(0.0, |m, p| m.max(p.skew_ns))
    }
}

const PERIOD_MATCH_RELATIVE: f64 = 1e-9;

pub fn run_session(
    devices: &[SimDevice],
    net: &NetworkModel,
    config: &SessionConfig,
) -> Result<SyncReport> {
    config.validate()?;
    if devices.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a session needs at least 2 devices, got {}",
            devices.len()
        )));
    }
    let tau = devices[0].camera.period_ns;
    for (d, dev) in devices.iter().enumerate() {
        if (dev.camera.period_ns - tau).abs() > PERIOD_MATCH_RELATIVE * tau {
            return Err(Error::PeriodMismatch {
                device: d,
                period_ns: dev.camera.period_ns,
                reference_ns: tau,
            });
        }
    }

    // 1. Offset exchanges.
    let mut network = Network::new(net.clone())?;
    let leader = &devices[0];
    let mut clock = 0.0;
    let mut rounds_used = 0u64;
    let mut messages_lost = 0u64;
    let mut estimated = vec![0.0; devices.len()];
    for (d, dev) in devices.iter().enumerate().skip(1) {
        let mut samples = Vec::with_capacity(config.n_exchanges);
        let mut consecutive_losses = 0;
        while samples.len() < config.n_exchanges {
            rounds_used += 1;
            let result = network.exchange_round(leader, dev, clock);
            clock += config.exchange_interval_ns;
            match result {
                Ok(s) => {
                    consecutive_losses = 0;
                    samples.push(s);
                }
                Err(Error::MessageLost) => {
                    messages_lost += 1;
                    consecutive_losses += 1;
                    if consecutive_losses > config.max_retries {
                        return Err(Error::SessionFailed(format!(
                            "device {} lost {consecutive_losses} consecutive exchanges",
                            dev.device_id
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        estimated[d] = min_filter_offset(&samples)?;
    }

    // 2. Preview recording, leader domain, shared epoch.
    let preview_start = (clock / tau).ceil() * tau;
    let epoch = (leader.local_time(preview_start) + 0.5 * config.train_frames as f64 * tau).round();
    let mut rng = DetRng::new(config.seed);
    let mut traces = Vec::with_capacity(devices.len());
    for (d, dev) in devices.iter().enumerate() {
        let caps = dev.record(preview_start, config.train_frames, &mut rng);
        let ts: Vec<i64> = caps
            .iter()
            .map(|c| (c.local_ns as f64 - estimated[d] - epoch).round() as i64)
            .collect();
        let trace = TimestampTrace::synthetic(dev.device_id.clone(), ts).map_err(|e| {
            Error::SessionFailed(format!("device {} preview unusable: {e}", dev.device_id))
        })?;
        traces.push(trace);
    }

    // 3. Per-device fit, pooled period, phases under the pooled period.
    let opts = EstimateOptions {
        min_samples: 3,
        ..EstimateOptions::default()
    };
    let mut periods = Vec::with_capacity(devices.len());
    for t in &traces {
        periods.push(estimate(t, &opts)?.model.period_ns());
    }
    let pooled = periods.iter().sum::<f64>() / periods.len() as f64;
    for (d, p) in periods.iter().enumerate() {
        if (p - pooled).abs() > config.period_tolerance * pooled {
            return Err(Error::PeriodMismatch {
                device: d,
                period_ns: *p,
                reference_ns: pooled,
            });
        }
    }
    let mut models = Vec::with_capacity(devices.len());
    for t in &traces {
        models.push(PhaseModel::new(phase_for_period(t, pooled)?, pooled, 0.0)?);
    }

    // 4. Plan and apply.
    let plan = plan_alignment(&models, models[0].phase_ns())?;
    let shifts: Vec<f64> = plan
        .shifts_ns
        .iter()
        .map(|&s| match config.exposure_quantum_ns {
            Some(q) => normalize_phase((s / q).round() * q, tau),
            None => s,
        })
        .collect();
    let apply_at = preview_start + (config.train_frames as f64 + 2.0) * tau;
    let mut aligned = Vec::with_capacity(devices.len());
    for (dev, &s) in devices.iter().zip(&shifts) {
        let mut a = apply_alignment(dev, s, apply_at)?;
        a.estimated_offset_ns = Some(estimated[aligned.len()]);
        aligned.push(a);
    }

    // 5. Video skew on true capture instants.
    let video_start = apply_at + 2.0 * tau;
    let instants: Vec<Vec<f64>> = aligned
        .iter()
        .map(|dev| {
            let first = dev.camera.first_slot_at_or_after(video_start);
            (0..config.video_frames as i64)
                .map(|k| dev.camera.instant(first + k))
                .collect()
        })
        .collect();
    let mut pairwise = Vec::new();
    for a in 0..aligned.len() {
        for b in a + 1..aligned.len() {
            let skew_ns = instants[a]
                .iter()
                .zip(&instants[b])
                .map(|(x, y)| wrap(x - y, tau).abs().min(tau / 2.0))
                .fold(0.0, f64::max);
            pairwise.push(PairSkew { a, b, skew_ns });
        }
    }

    let offset_errors_ns = devices
        .iter()
        .enumerate()
        .map(|(d, dev)| {
            let truth = dev.local_time(preview_start) - leader.local_time(preview_start);
            estimated[d] - truth
        })
        .collect();

    Ok(SyncReport {
        device_ids: devices.iter().map(|d| d.device_id.clone()).collect(),
        estimated_offsets_ns: estimated,
        offset_errors_ns,
        period_ns: pooled,
        phases_ns: models.iter().map(PhaseModel::phase_ns).collect(),
        shifts_ns: shifts,
        pairwise,
        rounds_used,
        messages_lost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimCamera;

    const TAU: f64 = 33_333_333.0;

    fn pair(offset: f64, phase_b: f64) -> Vec<SimDevice> {
        vec![
            SimDevice::new("leader", 0.0, SimCamera::new(TAU, 1_000_000.0)),
            SimDevice::new("follower", offset, SimCamera::new(TAU, phase_b)),
        ]
    }

    #[test]
    fn noiseless_session_aligns_exactly() {
        let devices = pair(123_456_789.0, 17_000_000.0);
        let r = run_session(
            &devices,
            &NetworkModel::ideal(2_000_000.0),
            &SessionConfig::default(),
        )
        .unwrap();
        assert_eq!(r.estimated_offsets_ns, vec![0.0, 123_456_789.0]);
        assert_eq!(r.offset_errors_ns, vec![0.0, 0.0]);
        assert_eq!(r.period_ns, TAU);
        assert_eq!(r.max_skew_ns(), 0.0);
        assert_eq!(r.rounds_used, 100);
        assert_eq!(r.shifts_ns[0], 0.0);
    }

    #[test]
    fn five_devices_report_ten_pairs_in_range() {
        let devices: Vec<SimDevice> = (0..5)
            .map(|i| {
                SimDevice::new(
                    format!("d{i}"),
                    i as f64 * 1e7,
                    SimCamera::new(TAU, i as f64 * 5e6).with_jitter(2e5),
                )
            })
            .collect();
        let net = NetworkModel {
            latency_jitter_sigma_ns: 1e6,
            seed: 4,
            ..NetworkModel::ideal(3e6)
        };
        let r = run_session(&devices, &net, &SessionConfig::default()).unwrap();
        assert_eq!(r.pairwise.len(), 10);
        assert!(r
            .pairwise
            .iter()
            .all(|p| p.skew_ns >= 0.0 && p.skew_ns <= TAU / 2.0));
    }

    #[test]
    fn lossy_network_fails_after_retries() {
        let net = NetworkModel {
            loss_prob: 0.99,
            ..NetworkModel::ideal(1e6)
        };
        let r = run_session(&pair(0.0, 0.0), &net, &SessionConfig::default());
        assert!(matches!(r, Err(Error::SessionFailed(_))));
    }

    #[test]
    fn rejects_single_device_and_mixed_periods() {
        let one = vec![SimDevice::new("a", 0.0, SimCamera::new(TAU, 0.0))];
        assert!(run_session(&one, &NetworkModel::ideal(0.0), &SessionConfig::default()).is_err());
        let mixed = vec![
            SimDevice::new("a", 0.0, SimCamera::new(TAU, 0.0)),
            SimDevice::new("b", 0.0, SimCamera::new(TAU * 1.01, 0.0)),
        ];
        assert!(matches!(
            run_session(&mixed, &NetworkModel::ideal(0.0), &SessionConfig::default()),
            Err(Error::PeriodMismatch { device: 1, .. })
        ));
    }

    #[test]
    fn quantized_shifts_are_multiples() {
        let cfg = SessionConfig {
            exposure_quantum_ns: Some(1e6),
            ..SessionConfig::default()
        };
        let r = run_session(&pair(5e6, 12_345_678.0), &NetworkModel::ideal(1e6), &cfg).unwrap();
        for s in &r.shifts_ns {
            assert_eq!((s / 1e6).fract(), 0.0);
        }
        assert!(r.max_skew_ns() <= 0.5e6);
    }
}
