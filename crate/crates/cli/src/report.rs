//! JSON reports. Integers are JSON numbers; reals are decimal strings holding
//! the shortest representation that parses back to the same `f64`.

use phasesync::drift::DriftReport;
use phasesync::estimator::{ClusterStats, PeriodEstimate};
use phasesync::noise::{NoiseClassification, NormalityOutcome, Regime};
use phasesync::sim::SyncReport;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A real number written as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub input_sha256: String,
    pub options: AnalysisOptions,
    pub devices: Vec<DeviceEntry>,
}

#[derive(Debug, Serialize)]
pub struct AnalysisOptions {
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    pub refine: bool,
}

#[derive(Debug, Serialize)]
pub struct DeviceEntry {
    pub device_id: String,
    pub n_timestamps: usize,
    pub status: &'static str,
    pub fit: Option<FitEntry>,
    pub noise: Option<NoiseEntry>,
    pub drift: Vec<DriftEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FitEntry {
    pub phase_ns: Real,
    pub period_ns: Real,
    pub noise_sigma_ns: Real,
    pub tau_init_ns: Real,
    pub objective_ns2: Real,
    pub refined: bool,
    pub clusters: Vec<ClusterEntry>,
}

impl From<&PeriodEstimate> for FitEntry {
    fn from(e: &PeriodEstimate) -> Self {
        Self {
            phase_ns: Real(e.model.phase_ns()),
            period_ns: Real(e.model.period_ns()),
            noise_sigma_ns: Real(e.model.noise_sigma_ns()),
            tau_init_ns: Real(e.tau_init_ns),
            objective_ns2: Real(e.objective),
            refined: e.refined,
            clusters: e.clusters.iter().map(ClusterEntry::from).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClusterEntry {
    pub k: u64,
    pub count: usize,
    pub tau_hat_ns: Real,
    pub sigma_hat_ns: Real,
}

impl From<&ClusterStats> for ClusterEntry {
    fn from(c: &ClusterStats) -> Self {
        Self {
            k: c.k,
            count: c.count,
            tau_hat_ns: Real(c.tau_hat_ns),
            sigma_hat_ns: Real(c.sigma_hat_ns),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NormalityEntry {
    pub statistic: Option<Real>,
    pub p_value: Option<Real>,
    pub pass: bool,
    pub degenerate_variance: bool,
}

impl From<&NormalityOutcome> for NormalityEntry {
    fn from(n: &NormalityOutcome) -> Self {
        Self {
            statistic: n.statistic.map(Real),
            p_value: n.p_value.map(Real),
            pass: n.pass,
            degenerate_variance: n.degenerate_variance,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClusterNormalityEntry {
    pub k: u64,
    pub count: usize,
    /// `null` when the cluster is too small to test.
    pub normality: Option<NormalityEntry>,
}

#[derive(Debug, Serialize)]
pub struct NoiseEntry {
    pub regime: &'static str,
    pub drop_rate: Real,
    pub significance: Real,
    pub clusters: Vec<ClusterNormalityEntry>,
    pub pooled: Option<NormalityEntry>,
}

impl From<&NoiseClassification> for NoiseEntry {
    fn from(c: &NoiseClassification) -> Self {
        Self {
            regime: match c.regime {
                Regime::Unimodal => "unimodal",
                Regime::MultiCluster => "multi_cluster",
            },
            drop_rate: Real(c.drop_rate),
            significance: Real(c.significance),
            clusters: c
                .normality
                .iter()
                .map(|n| ClusterNormalityEntry {
                    k: n.k,
                    count: n.count,
                    normality: n.outcome.as_ref().map(NormalityEntry::from),
                })
                .collect(),
            pooled: c.pooled.as_ref().map(NormalityEntry::from),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DriftEntry {
    pub train_size: usize,
    pub test_size: usize,
    pub drift_ms_per_min: Real,
    pub slope_sign: i8,
    pub fit_phase_ns: Real,
    pub fit_period_ns: Real,
    /// `[timestamp_ns, wrapped residual ns]` pairs over the test window.
    pub residual_series: Vec<(i64, Real)>,
}

impl From<&DriftReport> for DriftEntry {
    fn from(r: &DriftReport) -> Self {
        Self {
            train_size: r.train_size,
            test_size: r.test_size,
            drift_ms_per_min: Real(r.drift_ms_per_min),
            slope_sign: r.slope_sign,
            fit_phase_ns: Real(r.fit.phase_ns()),
            fit_period_ns: Real(r.fit.period_ns()),
            residual_series: r
                .residual_series
                .iter()
                .map(|(t, v)| (*t, Real(*v)))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SessionReport {
    pub schema_version: u32,
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub status: &'static str,
    pub error: Option<String>,
    pub result: Option<SessionResult>,
}

#[derive(Debug, Serialize)]
pub struct SessionResult {
    pub device_ids: Vec<String>,
    pub estimated_offsets_ns: Vec<Real>,
    pub offset_errors_ns: Vec<Real>,
    pub period_ns: Real,
    pub phases_ns: Vec<Real>,
    pub shifts_ns: Vec<Real>,
    pub pairwise: Vec<PairEntry>,
    pub max_skew_ns: Real,
    pub rounds_used: u64,
    pub messages_lost: u64,
}

#[derive(Debug, Serialize)]
pub struct PairEntry {
    pub a: usize,
    pub b: usize,
    pub skew_ns: Real,
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

impl From<&SyncReport> for SessionResult {
    fn from(r: &SyncReport) -> Self {
        Self {
            device_ids: r.device_ids.clone(),
            estimated_offsets_ns: reals(&r.estimated_offsets_ns),
            offset_errors_ns: reals(&r.offset_errors_ns),
            period_ns: Real(r.period_ns),
            phases_ns: reals(&r.phases_ns),
            shifts_ns: reals(&r.shifts_ns),
            pairwise: r
                .pairwise
                .iter()
                .map(|p| PairEntry {
                    a: p.a,
                    b: p.b,
                    skew_ns: Real(p.skew_ns),
                })
                .collect(),
            max_skew_ns: Real(r.max_skew_ns()),
            rounds_used: r.rounds_used,
            messages_lost: r.messages_lost,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub schema_version: u32,
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub sessions: usize,
    pub failed: usize,
    pub skew_threshold_ns: Real,
    /// `null` when every session failed.
    pub max_skew_ns: Option<Real>,
    pub median_max_skew_ns: Option<Real>,
    /// Share of all sessions, failed ones counted as misses.
    pub fraction_within_threshold: Real,
}
