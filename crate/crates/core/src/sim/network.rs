//! Four-timestamp offset exchanges over a simulated network.
//!
//! The leader is the client: it stamps `t1` on its clock, the device stamps
//! receipt `t2` and reply `t3` (the same instant; no processing delay), and
//! the leader stamps `t4` on receipt. One-way latency is
//! `base + sigma * E` downlink and `base + asymmetry + sigma * E` uplink, with
//! `E` a unit exponential queueing delay, truncated at 0.
//!
//! Every round consumes exactly four draws from the network stream in the
//! order: downlink loss, downlink queueing, uplink loss, uplink queueing.

use serde::{Deserialize, Serialize};

use super::SimDevice;
use crate::rng::DetRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_latency_ns: f64,
    pub latency_jitter_sigma_ns: f64,
    /// Mean uplink minus mean downlink latency.
    pub asymmetry_ns: f64,
    pub loss_prob: f64,
    pub seed: u64,
}

impl NetworkModel {
    /// Deterministic symmetric link.
    pub fn ideal(base_latency_ns: f64) -> Self {
        Self {
            base_latency_ns,
            latency_jitter_sigma_ns: 0.0,
            asymmetry_ns: 0.0,
            loss_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.base_latency_ns,
            self.latency_jitter_sigma_ns,
            self.asymmetry_ns,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.base_latency_ns < 0.0 || self.latency_jitter_sigma_ns < 0.0 {
            return Err(Error::InvalidArgument(
                "network latencies must be finite and nonnegative".into(),
            ));
        }
        if !(self.loss_prob >= 0.0 && self.loss_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "loss_prob must lie in [0, 1), got {}",
                self.loss_prob
            )));
        }
        Ok(())
    }
}

/// The four stamps of one exchange, all in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetSample {
    /// Leader send, leader clock.
    pub t1: f64,
    /// Device receive, device clock.
    pub t2: f64,
    /// Device reply, device clock.
    pub t3: f64,
    /// Leader receive, leader clock.
    pub t4: f64,
}

impl OffsetSample {
    /// Estimated device clock minus leader clock.
    pub fn offset_ns(&self) -> f64 {
        ((self.t2 - self.t1) + (self.t3 - self.t4)) / 2.0
    }

    pub fn rtt_ns(&self) -> f64 {
        (self.t4 - self.t1) - (self.t3 - self.t2)
    }
}

/// A network link with its own random stream.
#[derive(Debug, Clone)]
pub struct Network {
    model: NetworkModel,
    rng: DetRng,
}

impl Network {
    pub fn new(model: NetworkModel) -> Result<Self> {
        model.validate()?;
        let rng = DetRng::new(model.seed);
        Ok(Self { model, rng })
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    /// One exchange starting at true time `send_at_ns`.
    pub fn exchange_round(
        &mut self,
        leader: &SimDevice,
        device: &SimDevice,
        send_at_ns: f64,
    ) -> Result<OffsetSample> {
        let m = &self.model;
        let lost_down = self.rng.uniform() < m.loss_prob;
        let down =
            (m.base_latency_ns + m.latency_jitter_sigma_ns * self.rng.exponential()).max(0.0);
        let lost_up = self.rng.uniform() < m.loss_prob;
        let up = (m.base_latency_ns
            + m.asymmetry_ns
            + m.latency_jitter_sigma_ns * self.rng.exponential())
        .max(0.0);
        if lost_down || lost_up {
            return Err(Error::MessageLost);
        }
        let arrive = send_at_ns + down;
        Ok(OffsetSample {
            t1: leader.local_time(send_at_ns),
            t2: device.local_time(arrive),
            t3: device.local_time(arrive),
            t4: leader.local_time(arrive + up),
        })
    }
}

/// Offset of the minimum-round-trip sample; the earliest wins ties.
///
/// ```
/// use phasesync::sim::{min_filter_offset, OffsetSample};
/// let s = |rtt: f64, off: f64| OffsetSample { t1: 0.0, t2: off + rtt / 2.0, t3: off + rtt / 2.0, t4: rtt };
/// let samples = [s(10.0, 3.0), s(4.0, 5.0), s(7.0, 1.0)];
/// assert_eq!(min_filter_offset(&samples).unwrap(), 5.0);
/// ```
pub fn min_filter_offset(samples: &[OffsetSample]) -> Result<f64> {
    let mut best: Option<&OffsetSample> = None;
    for s in samples {
        if best.map_or(true, |b| s.rtt_ns() < b.rtt_ns()) {
            best = Some(s);
        }
    }
    best.map(OffsetSample::offset_ns).ok_or(Error::NoSamples)
}

/// Plain mean of the sample offsets, the baseline the min filter is compared to.
pub fn mean_offset(samples: &[OffsetSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(samples.iter().map(OffsetSample::offset_ns).sum::<f64>() / samples.len() as f64)
}
