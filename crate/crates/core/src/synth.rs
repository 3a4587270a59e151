//! Seeded synthetic traces with known ground truth.
//!
//! Slot `n` of segment `s` is captured at
//! `tau0 + offset_s + n * tau + skew * nominal / 60e9 + sigma * z`,
//! rounded to the nearest nanosecond, where `nominal` is the undrifted instant
//! and `z` a standard normal draw.
//!
//! Draw order per slot, from one [`DetRng`] stream seeded with `spec.seed`:
//! one uniform for the drop decision, then (for kept slots) one normal for the
//! jitter. A jitter draw that would not land strictly after the previous kept
//! timestamp is discarded and redrawn; redraws are counted.

use serde::{Deserialize, Serialize};

use crate::model::{FrameIndexAssignment, PhaseModel, TimestampTrace};
use crate::rng::DetRng;
use crate::{Error, Result, NS_PER_MIN};

/// Period of a 30 fps stream.
pub const PERIOD_30FPS_NS: f64 = 1e9 / 30.0;
pub const PREVIEW_FRAMES: usize = 450;
pub const VIDEO_FRAMES: usize = 1350;

const MAX_REDRAWS_PER_FRAME: usize = 1000;

/// A run of consecutive slots sharing one phase offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub n_frames: usize,
    /// Added to the base phase for every slot of the segment; in `[0, tau)`.
    pub phase_offset_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub device_id: String,
    pub tau_ns: f64,
    pub tau0_ns: f64,
    /// Number of slots, including the ones that get dropped.
    pub n_frames: usize,
    pub jitter_sigma_ns: f64,
    pub drop_prob: f64,
    pub skew_ns_per_min: f64,
    /// Empty means a single segment with zero offset.
    pub segments: Vec<Segment>,
    pub seed: u64,
}

impl TraceSpec {
    /// Noise-free, drop-free spec.
    pub fn new(tau_ns: f64, tau0_ns: f64, n_frames: usize) -> Self {
        Self {
            device_id: "synthetic".into(),
            tau_ns,
            tau0_ns,
            n_frames,
            jitter_sigma_ns: 0.0,
            drop_prob: 0.0,
            skew_ns_per_min: 0.0,
            segments: Vec::new(),
            seed: 0,
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

    pub fn with_skew(mut self, ns_per_min: f64) -> Self {
        self.skew_ns_per_min = ns_per_min;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidSpec { field, reason });
        if !(self.tau_ns > 0.0 && self.tau_ns.is_finite()) {
            return bad("tau_ns", format!("must be positive, got {}", self.tau_ns));
        }
        if !self.tau0_ns.is_finite() {
            return bad("tau0_ns", "must be finite".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames", "must be at least 1".into());
        }
        if !(self.jitter_sigma_ns >= 0.0 && self.jitter_sigma_ns < self.tau_ns / 4.0) {
            return bad(
                "jitter_sigma_ns",
                format!(
                    "must lie in [0, tau/4) = [0, {}), got {}",
                    self.tau_ns / 4.0,
                    self.jitter_sigma_ns
                ),
            );
        }
        if !(self.drop_prob >= 0.0 && self.drop_prob < 1.0) {
            return bad(
                "drop_prob",
                format!("must lie in [0, 1), got {}", self.drop_prob),
            );
        }
        if !self.skew_ns_per_min.is_finite() {
            return bad("skew_ns_per_min", "must be finite".into());
        }
        if !self.segments.is_empty() {
            let total: usize = self.segments.iter().map(|s| s.n_frames).sum();
            if total != self.n_frames {
                return bad(
                    "segments",
                    format!(
                        "segment lengths sum to {total}, expected n_frames = {}",
                        self.n_frames
                    ),
                );
            }
            if let Some(s) = self
                .segments
                .iter()
                .find(|s| !(s.phase_offset_ns >= 0.0 && s.phase_offset_ns < self.tau_ns))
            {
                return bad(
                    "segments",
                    format!("phase offset {} outside [0, tau)", s.phase_offset_ns),
                );
            }
        }
        Ok(())
    }

    fn offset_for_slot(&self) -> Vec<f64> {
        if self.segments.is_empty() {
            return vec![0.0; self.n_frames];
        }
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat(s.phase_offset_ns).take(s.n_frames))
            .collect()
    }
}

/// Two-segment spec mirroring a 15 s preview followed by 45 s of video at 30 fps.
/// The first slot sits 5 ms after zero so moderate jitter keeps timestamps nonnegative.
///
/// ```
/// use phasesync::synth::paper_protocol_spec;
/// let spec = paper_protocol_spec(200_000.0, 0.0, 0.0);
/// assert_eq!(spec.n_frames, 1800);
/// assert_eq!(spec.segments.len(), 2);
/// assert!((spec.tau_ns - 33_333_333.333).abs() < 1e-3);
/// ```
pub fn paper_protocol_spec(
    jitter_sigma_ns: f64,
    drop_prob: f64,
    skew_ns_per_min: f64,
) -> TraceSpec {
    TraceSpec {
        device_id: "synthetic".into(),
        tau_ns: PERIOD_30FPS_NS,
        tau0_ns: 5_000_000.0,
        n_frames: PREVIEW_FRAMES + VIDEO_FRAMES,
        jitter_sigma_ns,
        drop_prob,
        skew_ns_per_min,
        segments: vec![
            Segment {
                n_frames: PREVIEW_FRAMES,
                phase_offset_ns: 0.0,
            },
            Segment {
                n_frames: VIDEO_FRAMES,
                phase_offset_ns: 0.0,
            },
        ],
        seed: 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub trace: TimestampTrace,
    /// Base phase, period and jitter sigma of the spec.
    pub ground_truth: PhaseModel,
    /// Slot number of every surviving timestamp.
    pub true_indices: FrameIndexAssignment,
    /// Number of discarded order-violating jitter draws.
    pub redraws: usize,
    /// Position in the surviving trace where each segment starts.
    pub segment_starts: Vec<usize>,
}

impl GeneratedTrace {
    /// Surviving timestamps of segment `i` as their own trace.
    pub fn segment(&self, i: usize) -> Result<TimestampTrace> {
        let start = *self
            .segment_starts
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no segment {i}")))?;
        let end = self
            .segment_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.trace.len());
        self.trace.window(start, end)
    }
}

/// Runs the spec forward.
///
/// ```
/// use phasesync::synth::{generate, TraceSpec};
/// let g = generate(&TraceSpec::new(10e6, 2e6, 5)).unwrap();
/// assert_eq!(g.trace.timestamps(), &[2_000_000, 12_000_000, 22_000_000, 32_000_000, 42_000_000]);
/// ```
pub fn generate(spec: &TraceSpec) -> Result<GeneratedTrace> {
    spec.validate()?;
    let mut rng = DetRng::new(spec.seed);
    let offsets = spec.offset_for_slot();
    let seg_first_slot: Vec<usize> = if spec.segments.is_empty() {
        vec![0]
    } else {
        spec.segments
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.n_frames;
                Some(start)
            })
            .collect()
    };

    let mut timestamps = Vec::with_capacity(spec.n_frames);
    let mut indices = Vec::with_capacity(spec.n_frames);
    let mut segment_starts = Vec::with_capacity(seg_first_slot.len());
    let mut redraws = 0;
    let mut prev: Option<i64> = None;
    let mut next_seg = 0;
    for (n, offset) in offsets.iter().enumerate() {
        while next_seg < seg_first_slot.len() && seg_first_slot[next_seg] <= n {
            segment_starts.push(timestamps.len());
            next_seg += 1;
        }
        if rng.uniform() < spec.drop_prob {
            continue;
        }
        let nominal = spec.tau0_ns + offset + n as f64 * spec.tau_ns;
        let drifted = nominal + spec.skew_ns_per_min * nominal / NS_PER_MIN;
        let mut attempts = 0;
        let t = loop {
            let jitter = if spec.jitter_sigma_ns > 0.0 {
                spec.jitter_sigma_ns * rng.gaussian()
            } else {
                0.0
            };
            let t = (drifted + jitter).round() as i64;
            if prev.map_or(true, |p| t > p) {
                break t;
            }
            attempts += 1;
            redraws += 1;
            if attempts >= MAX_REDRAWS_PER_FRAME {
                return Err(Error::InvalidSpec {
                    field: "jitter_sigma_ns",
                    reason: format!("slot {n} could not be placed after its predecessor"),
                });
            }
        };
        prev = Some(t);
        timestamps.push(t);
        indices.push(n as i64);
    }
    while segment_starts.len() < seg_first_slot.len() {
        segment_starts.push(timestamps.len());
    }

    let trace = TimestampTrace::synthetic(spec.device_id.clone(), timestamps)?;
    Ok(GeneratedTrace {
        trace,
        ground_truth: PhaseModel::new(spec.tau0_ns, spec.tau_ns, spec.jitter_sigma_ns)?,
        true_indices: FrameIndexAssignment::new(indices, spec.tau_ns)?,
        redraws,
        segment_starts,
    })
}
