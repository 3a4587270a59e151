//! Flat TOML config files for `generate` and `simulate`.
//!
//! Every key is optional at the parser level so that a missing required key can
//! be reported by name. Unknown keys are rejected.

use std::path::Path;

use phasesync::sim::{NetworkModel, SessionConfig, SimCamera, SimDevice};
use phasesync::synth::{paper_protocol_spec, Segment, TraceSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpecFile {
    /// `"paper_protocol"`: 1800 slots at 30 fps split 450 + 1350.
    pub preset: Option<String>,
    pub device_id: Option<String>,
    pub period_ns: Option<f64>,
    pub phase_ns: Option<f64>,
    pub n_frames: Option<usize>,
    pub jitter_sigma_ns: Option<f64>,
    pub drop_prob: Option<f64>,
    pub skew_ns_per_min: Option<f64>,
    pub segment_frames: Option<Vec<usize>>,
    pub segment_phase_offsets_ns: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub period_ns: Option<f64>,
    pub n_devices: Option<usize>,
    pub device_offsets_ns: Option<Vec<f64>>,
    pub device_phases_ns: Option<Vec<f64>>,
    pub device_skews_ns_per_min: Option<Vec<f64>>,
    pub camera_jitter_sigma_ns: Option<f64>,
    pub camera_drop_prob: Option<f64>,
    pub base_latency_ns: Option<f64>,
    pub latency_jitter_sigma_ns: Option<f64>,
    pub asymmetry_ns: Option<f64>,
    pub loss_prob: Option<f64>,
    pub n_exchanges: Option<usize>,
    pub exchange_interval_ns: Option<f64>,
    pub max_retries: Option<usize>,
    pub train_frames: Option<usize>,
    pub video_frames: Option<usize>,
    pub period_tolerance: Option<f64>,
    pub exposure_quantum_ns: Option<f64>,
    pub skew_threshold_ns: Option<f64>,
    pub seed: Option<u64>,
}

fn config_err(path: &Path, field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        field: field.into(),
        message: message.into(),
    }
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let field = message
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<file>".into());
        config_err(path, field, message)
    })
}

/// Parses a trace spec file.
pub fn trace_spec(text: &str, path: &Path) -> Result<TraceSpec, CliError> {
    let f: TraceSpecFile = parse_toml(text, path)?;
    let mut spec = match f.preset.as_deref() {
        None => {
            let period = f
                .period_ns
                .ok_or_else(|| config_err(path, "period_ns", "required key is missing"))?;
            let n = f
                .n_frames
                .or_else(|| f.segment_frames.as_ref().map(|s| s.iter().sum()))
                .ok_or_else(|| config_err(path, "n_frames", "required key is missing"))?;
            TraceSpec::new(period, 0.0, n)
        }
        Some("paper_protocol") => {
            let mut s = paper_protocol_spec(0.0, 0.0, 0.0);
            if let Some(p) = f.period_ns {
                s.tau_ns = p;
            }
            if let Some(n) = f.n_frames {
                if n != s.n_frames && f.segment_frames.is_none() {
                    return Err(config_err(
                        path,
                        "n_frames",
                        "the paper_protocol preset fixes 1800 frames unless segment_frames is given",
                    ));
                }
            }
            s
        }
        Some(other) => {
            return Err(config_err(
                path,
                "preset",
                format!("unknown preset `{other}`"),
            ));
        }
    };
    if let Some(n) = f.n_frames {
        spec.n_frames = n;
    }
    if let Some(id) = f.device_id {
        spec.device_id = id;
    }
    if let Some(v) = f.phase_ns {
        spec.tau0_ns = v;
    }
    if let Some(v) = f.jitter_sigma_ns {
        spec.jitter_sigma_ns = v;
    }
    if let Some(v) = f.drop_prob {
        spec.drop_prob = v;
    }
    if let Some(v) = f.skew_ns_per_min {
        spec.skew_ns_per_min = v;
    }
    if let Some(v) = f.seed {
        spec.seed = v;
    }
    match (f.segment_frames, f.segment_phase_offsets_ns) {
        (None, None) => {}
        (Some(frames), offsets) => {
            let offsets = offsets.unwrap_or_else(|| vec![0.0; frames.len()]);
            if offsets.len() != frames.len() {
                return Err(config_err(
                    path,
                    "segment_phase_offsets_ns",
                    format!(
                        "has {} entries, segment_frames has {}",
                        offsets.len(),
                        frames.len()
                    ),
                ));
            }
            if f.n_frames.is_none() {
                spec.n_frames = frames.iter().sum();
            }
            spec.segments = frames
                .into_iter()
                .zip(offsets)
                .map(|(n_frames, phase_offset_ns)| Segment {
                    n_frames,
                    phase_offset_ns,
                })
                .collect();
        }
        (None, Some(offsets)) => {
            if offsets.len() != spec.segments.len() {
                return Err(config_err(
                    path,
                    "segment_phase_offsets_ns",
                    "needs segment_frames with the same number of entries",
                ));
            }
            for (s, o) in spec.segments.iter_mut().zip(offsets) {
                s.phase_offset_ns = o;
            }
        }
    }
    spec.validate().map_err(|e| match e {
        phasesync::Error::InvalidSpec { field, reason } => {
            let key = match field {
                "tau_ns" => "period_ns",
                "tau0_ns" => "phase_ns",
                "segments" => "segment_frames",
                other => other,
            };
            config_err(path, key, reason)
        }
        other => config_err(path, "<file>", other.to_string()),
    })?;
    Ok(spec)
}

/// A fully resolved `simulate` configuration.
#[derive(Debug, Clone)]
pub struct SessionSetup {
    pub devices: Vec<SimDevice>,
    pub network: NetworkModel,
    pub session: SessionConfig,
    pub skew_threshold_ns: f64,
    pub base_seed: u64,
}

/// Offset given to device `d` when the config lists none.
pub fn default_offset_ns(d: usize) -> f64 {
    d as f64 * 1_000_000_007.0
}

/// Phase given to device `d` when the config lists none: successive golden-ratio
/// fractions of the period, rounded to whole nanoseconds.
pub fn default_phase_ns(d: usize, period: f64) -> f64 {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    ((d as f64 * golden).fract() * period).round()
}

pub fn session(text: &str, path: &Path) -> Result<SessionSetup, CliError> {
    let f: SessionFile = parse_toml(text, path)?;
    let period = f
        .period_ns
        .ok_or_else(|| config_err(path, "period_ns", "required key is missing"))?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(config_err(path, "period_ns", "must be positive"));
    }
    let listed = [
        f.device_offsets_ns.as_ref().map(Vec::len),
        f.device_phases_ns.as_ref().map(Vec::len),
        f.device_skews_ns_per_min.as_ref().map(Vec::len),
    ];
    let n = f
        .n_devices
        .or_else(|| listed.iter().flatten().copied().next())
        .unwrap_or(2);
    if n < 2 {
        return Err(config_err(
            path,
            "n_devices",
            "a session needs at least 2 devices",
        ));
    }
    for (key, len) in [
        "device_offsets_ns",
        "device_phases_ns",
        "device_skews_ns_per_min",
    ]
    .iter()
    .zip(listed)
    {
        if let Some(len) = len {
            if len != n {
                return Err(config_err(
                    path,
                    *key,
                    format!("has {len} entries for {n} devices"),
                ));
            }
        }
    }
    let jitter = f.camera_jitter_sigma_ns.unwrap_or(0.0);
    if !(jitter >= 0.0 && jitter < period / 4.0) {
        return Err(config_err(
            path,
            "camera_jitter_sigma_ns",
            "must lie in [0, period/4)",
        ));
    }
    let drop = f.camera_drop_prob.unwrap_or(0.0);
    if !(0.0..1.0).contains(&drop) {
        return Err(config_err(path, "camera_drop_prob", "must lie in [0, 1)"));
    }
    let devices = (0..n)
        .map(|d| {
            let offset = f
                .device_offsets_ns
                .as_ref()
                .map_or(default_offset_ns(d), |v| v[d]);
            let phase = f
                .device_phases_ns
                .as_ref()
                .map_or(default_phase_ns(d, period), |v| v[d]);
            let skew = f.device_skews_ns_per_min.as_ref().map_or(0.0, |v| v[d]);
            SimDevice::new(
                format!("dev{d}"),
                offset,
                SimCamera::new(period, phase)
                    .with_jitter(jitter)
                    .with_drop_prob(drop),
            )
            .with_skew(skew)
        })
        .collect();
    let base_seed = f.seed.unwrap_or(0);
    let network = NetworkModel {
        base_latency_ns: f.base_latency_ns.unwrap_or(3e6),
        latency_jitter_sigma_ns: f.latency_jitter_sigma_ns.unwrap_or(0.0),
        asymmetry_ns: f.asymmetry_ns.unwrap_or(0.0),
        loss_prob: f.loss_prob.unwrap_or(0.0),
        seed: base_seed,
    };
    network
        .validate()
        .map_err(|e| config_err(path, "network", e.to_string()))?;
    let defaults = SessionConfig::default();
    let session = SessionConfig {
        n_exchanges: f.n_exchanges.unwrap_or(defaults.n_exchanges),
        exchange_interval_ns: f
            .exchange_interval_ns
            .unwrap_or(defaults.exchange_interval_ns),
        max_retries: f.max_retries.unwrap_or(defaults.max_retries),
        train_frames: f.train_frames.unwrap_or(defaults.train_frames),
        video_frames: f.video_frames.unwrap_or(defaults.video_frames),
        period_tolerance: f.period_tolerance.unwrap_or(defaults.period_tolerance),
        exposure_quantum_ns: f.exposure_quantum_ns,
        seed: base_seed,
    };
    session
        .validate()
        .map_err(|e| config_err(path, "session", e.to_string()))?;
    Ok(SessionSetup {
        devices,
        network,
        session,
        skew_threshold_ns: f.skew_threshold_ns.unwrap_or(250_000.0),
        base_seed,
    })
}
