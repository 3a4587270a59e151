//! Period and phase estimation.
//!
//! The main path avoids the mixed-integer problem of fitting `(phase, period)`
//! and the slot indices jointly:
//!
//! 1. Seed the period with the smallest consecutive difference ([`tau_init`]).
//!    Dropped frames only make differences longer, so the minimum is one period
//!    minus some jitter.
//! 2. Round every difference to a whole number of seed periods
//!    ([`build_diff_series`]). Differences spanning `k` slots form cluster `k`.
//! 3. Each cluster gives `tau_k = sum(dt) / (n_k * k)`; these are combined with
//!    weights `n_k * k^2`, which is the same as regressing `dt` on `k` through
//!    the origin ([`solve_clustered_lsq`]).
//! 4. Recover the phase as the circular mean of `t mod tau` ([`estimate_phase`]).
//! 5. Optionally re-assign slots with the fitted grid and re-fit `(phase, period)`
//!    by ordinary least squares until the assignment stops changing.
//!
//! [`exact_solve`] is a brute-force reference for short traces.

mod exact;
mod ols;

pub use exact::{exact_solve, DEFAULT_GRID_STEPS, MAX_EXACT_LEN};
pub use ols::{fit_line, LineFit};

use serde::{Deserialize, Serialize};

use crate::model::{
    assign_indices, check_period, normalize_phase, objective, slot, FrameIndexAssignment,
    PhaseModel, TimestampTrace,
};
use crate::{Error, Result};

/// Consecutive differences and their slot counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    diffs: Vec<f64>,
    delta_n: Vec<u64>,
}

impl DiffSeries {
    pub fn new(diffs: Vec<f64>, delta_n: Vec<u64>) -> Result<Self> {
        if diffs.len() != delta_n.len() {
            return Err(Error::LengthMismatch {
                expected: diffs.len(),
                actual: delta_n.len(),
            });
        }
        if diffs.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if let Some(i) = diffs.iter().position(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "difference {i} is {} (must be positive and finite)",
                diffs[i]
            )));
        }
        if let Some(i) = delta_n.iter().position(|k| *k == 0) {
            return Err(Error::InvalidArgument(format!("slot count {i} is zero")));
        }
        Ok(Self { diffs, delta_n })
    }

    pub fn diffs(&self) -> &[f64] {
        &self.diffs
    }

    pub fn delta_n(&self) -> &[u64] {
        &self.delta_n
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    /// Members of cluster `k`, each scaled to one period (`dt / k`).
    pub fn cluster_samples(&self, k: u64) -> Vec<f64> {
        self.diffs
            .iter()
            .zip(&self.delta_n)
            .filter(|(_, n)| **n == k)
            .map(|(d, n)| d / *n as f64)
            .collect()
    }
}

/// Statistics of the differences that span `k` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub k: u64,
    pub count: usize,
    /// `sum(dt) / (count * k)`.
    pub tau_hat_ns: f64,
    /// Sample standard deviation of `dt / k` (0 for a single member).
    pub sigma_hat_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Smallest consecutive difference.
    #[default]
    Minimum,
    /// 5th percentile of the differences; tolerates a few corrupted short gaps.
    Percentile5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterWeighting {
    /// `n_k * k^2`: equal per-difference noise.
    #[default]
    CountKSquared,
    /// `n_k * k^2 / sigma_k^2`. Used only when every cluster has at least
    /// [`MIN_INVERSE_VARIANCE_COUNT`] members and nonzero spread; otherwise
    /// falls back to `n_k * k^2`.
    InverseVariance,
}

pub const MIN_INVERSE_VARIANCE_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub min_samples: usize,
    pub refine: bool,
    pub max_refine_iterations: usize,
    pub seed_mode: SeedMode,
    pub weighting: ClusterWeighting,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            min_samples: 10,
            refine: true,
            max_refine_iterations: 10,
            seed_mode: SeedMode::Minimum,
            weighting: ClusterWeighting::CountKSquared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub model: PhaseModel,
    pub clusters: Vec<ClusterStats>,
    pub tau_init_ns: f64,
    /// Final sum of squared (unwrapped) residuals under the final assignment.
    pub objective: f64,
    pub refined: bool,
    /// Objective after the closed-form step and after each refinement step.
    pub objective_history: Vec<f64>,
    pub assignment: FrameIndexAssignment,
}

/// Smallest consecutive difference of the trace.
///
/// ```
/// use phasesync::estimator::tau_init;
/// use phasesync::model::validate_trace;
/// let t = validate_trace(&[0, 10, 21, 30]).unwrap();
/// assert_eq!(tau_init(&t).unwrap(), 9.0);
/// ```
pub fn tau_init(trace: &TimestampTrace) -> Result<f64> {
    Ok(tau_seed(trace, SeedMode::Minimum))
}

/// Seed period under the given mode.
pub fn tau_seed(trace: &TimestampTrace, mode: SeedMode) -> f64 {
    match mode {
        SeedMode::Minimum => trace.diffs().min().expect("trace has two samples") as f64,
        SeedMode::Percentile5 => {
            let mut d: Vec<i64> = trace.diffs().collect();
            d.sort_unstable();
            d[(d.len() - 1) * 5 / 100] as f64
        }
    }
}

/// Differences of the trace with slot counts `round(dt / tau_seed)`.
///
/// Each difference is rounded on its own rather than differencing rounded
/// absolute slots, so a seed that is slightly short does not accumulate into
/// spurious two-slot gaps late in the trace.
///
/// ```
/// use phasesync::estimator::build_diff_series;
/// use phasesync::model::validate_trace;
/// let t = validate_trace(&[0, 10, 20, 40, 50]).unwrap();
/// let s = build_diff_series(&t, 10.0).unwrap();
/// assert_eq!(s.diffs(), &[10.0, 10.0, 20.0, 10.0]);
/// assert_eq!(s.delta_n(), &[1, 1, 2, 1]);
/// ```
pub fn build_diff_series(trace: &TimestampTrace, tau_seed: f64) -> Result<DiffSeries> {
    check_period(tau_seed)?;
    let mut diffs = Vec::with_capacity(trace.len() - 1);
    let mut delta_n = Vec::with_capacity(trace.len() - 1);
    for (i, d) in trace.diffs().enumerate() {
        let d = d as f64;
        let k = slot(d, tau_seed);
        if k <= 0 {
            return Err(Error::DegenerateSeed {
                index: i + 1,
                seed_ns: tau_seed,
            });
        }
        diffs.push(d);
        delta_n.push(k as u64);
    }
    DiffSeries::new(diffs, delta_n)
}

/// Per-cluster statistics sorted by `k`.
pub fn cluster_stats(series: &DiffSeries) -> Vec<ClusterStats> {
    let mut ks: Vec<u64> = series.delta_n().to_vec();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let xs = series.cluster_samples(k);
            let n = xs.len();
            let sum: f64 = series
                .diffs()
                .iter()
                .zip(series.delta_n())
                .filter(|(_, m)| **m == k)
                .map(|(d, _)| *d)
                .sum();
            let tau_hat = sum / (n as f64 * k as f64);
            let sigma = if n > 1 {
                let mean = xs.iter().sum::<f64>() / n as f64;
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            ClusterStats {
                k,
                count: n,
                tau_hat_ns: tau_hat,
                sigma_hat_ns: sigma,
            }
        })
        .collect()
}

/// Combined period from the per-cluster solutions, default weights.
///
/// ```
/// use phasesync::estimator::{solve_clustered_lsq, DiffSeries};
/// let s = DiffSeries::new(vec![20.0, 20.4], vec![2, 2]).unwrap();
/// let (tau, clusters) = solve_clustered_lsq(&s);
/// assert!((tau - 10.1).abs() < 1e-12);
/// assert_eq!(clusters.len(), 1);
/// ```
pub fn solve_clustered_lsq(series: &DiffSeries) -> (f64, Vec<ClusterStats>) {
    solve_clustered_lsq_with(series, ClusterWeighting::CountKSquared)
}

pub fn solve_clustered_lsq_with(
    series: &DiffSeries,
    weighting: ClusterWeighting,
) -> (f64, Vec<ClusterStats>) {
    let clusters = cluster_stats(series);
    let inverse_variance = weighting == ClusterWeighting::InverseVariance
        && clusters
            .iter()
            .all(|c| c.count >= MIN_INVERSE_VARIANCE_COUNT && c.sigma_hat_ns > 0.0);
    let tau = if inverse_variance {
        let (mut num, mut den) = (0.0, 0.0);
        for c in &clusters {
            let w = c.count as f64 * (c.k * c.k) as f64 / (c.sigma_hat_ns * c.sigma_hat_ns);
            num += w * c.tau_hat_ns;
            den += w;
        }
        num / den
    } else {
        // With weights n_k k^2 the weighted mean of tau_k collapses to
        // sum(k dt) / sum(k^2), evaluated directly to avoid extra rounding.
        let (mut num, mut den) = (0.0, 0.0);
        for (d, k) in series.diffs().iter().zip(series.delta_n()) {
            let k = *k as f64;
            num += k * d;
            den += k * k;
        }
        num / den
    };
    (tau, clusters)
}

/// Circular mean of the timestamps' residues modulo `tau`, in `[0, tau)`.
///
/// Treats `t mod tau` as an angle, so samples straddling the wrap point
/// average to the wrap point rather than to `tau / 2`.
pub fn estimate_phase(trace: &TimestampTrace, tau: f64) -> Result<f64> {
    check_period(tau)?;
    let (mut s, mut c) = (0.0, 0.0);
    for &t in trace.timestamps() {
        let a = std::f64::consts::TAU * (t as f64).rem_euclid(tau) / tau;
        s += a.sin();
        c += a.cos();
    }
    if s == 0.0 && c == 0.0 {
        return Ok(0.0);
    }
    let mean = s.atan2(c) / std::f64::consts::TAU * tau;
    Ok(normalize_phase(mean, tau))
}

/// Least-squares phase for a fixed period.
///
/// Seeds the slot assignment with [`estimate_phase`] and returns the mean of
/// `t_i - N_i * tau`. Exact when the trace lies on an integer grid.
pub fn phase_for_period(trace: &TimestampTrace, tau: f64) -> Result<f64> {
    let seed = PhaseModel::new(estimate_phase(trace, tau)?, tau, 0.0)?;
    let asg = assign_indices(trace, &seed)?;
    let t0 = trace.timestamps()[0];
    let n0 = asg.indices()[0];
    let sum: f64 = trace
        .timestamps()
        .iter()
        .zip(asg.indices())
        .map(|(&t, &n)| (t - t0) as f64 - (n - n0) as f64 * tau)
        .sum();
    let mean = sum / trace.len() as f64;
    Ok(normalize_phase(t0 as f64 - n0 as f64 * tau + mean, tau))
}

pub(crate) struct Refined {
    pub model: PhaseModel,
    pub assignment: FrameIndexAssignment,
    pub history: Vec<f64>,
}

/// Alternates slot assignment and straight-line fitting until the relative
/// slot pattern is stable.
pub(crate) fn refine(
    trace: &TimestampTrace,
    start: PhaseModel,
    max_iterations: usize,
) -> Result<Refined> {
    let ts = trace.timestamps();
    let t0 = ts[0];
    let y: Vec<i64> = ts.iter().map(|t| t - t0).collect();
    let mut model = start;
    let mut assignment = assign_indices(trace, &model)?;
    let mut history = vec![objective(trace, &model, assignment.indices())?];
    for _ in 0..max_iterations {
        let x = assignment.relative();
        let line = fit_line(&x, &y);
        check_period(line.slope)?;
        let next_model = PhaseModel::new(
            (t0 as f64 + line.intercept).rem_euclid(line.slope),
            line.slope,
            0.0,
        )?;
        let next = assign_indices(trace, &next_model)?;
        history.push(objective(trace, &next_model, next.indices())?);
        let stable = next.relative() == x;
        model = next_model;
        assignment = next;
        if stable {
            return Ok(Refined {
                model,
                assignment,
                history,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
    })
}

fn residual_sigma(objective: f64, n: usize) -> f64 {
    if n > 2 {
        (objective / (n - 2) as f64).sqrt()
    } else {
        0.0
    }
}

/// Cap on re-rounding passes in [`closed_form_period`].
pub const MAX_REROUND_ITERATIONS: usize = 10;

/// Clustered least-squares period, re-rounding the slot counts against each
/// new period until they stop changing.
///
/// A jittered minimum difference undershoots the period, and long gaps then
/// round to one slot too many; one more pass against the solved period
/// repairs them.
fn closed_form_period(
    trace: &TimestampTrace,
    seed: f64,
    weighting: ClusterWeighting,
) -> Result<(f64, Vec<ClusterStats>)> {
    let mut series = build_diff_series(trace, seed)?;
    let (mut tau, mut clusters) = solve_clustered_lsq_with(&series, weighting);
    for _ in 0..MAX_REROUND_ITERATIONS {
        let next = build_diff_series(trace, tau)?;
        if next.delta_n() == series.delta_n() {
            break;
        }
        series = next;
        (tau, clusters) = solve_clustered_lsq_with(&series, weighting);
    }
    Ok((tau, clusters))
}

/// Full estimation pipeline.
pub fn estimate(trace: &TimestampTrace, options: &EstimateOptions) -> Result<PeriodEstimate> {
    let min = options.min_samples.max(2);
    if trace.len() < min {
        return Err(Error::TooFewSamples {
            needed: min,
            got: trace.len(),
        });
    }
    let seed = tau_seed(trace, options.seed_mode);
    let (tau, clusters) = closed_form_period(trace, seed, options.weighting)?;
    let phase = estimate_phase(trace, tau)?;
    let model = PhaseModel::new(phase, tau, 0.0)?;

    let (model, assignment, history) = if options.refine {
        let r = refine(trace, model, options.max_refine_iterations)?;
        (r.model, r.assignment, r.history)
    } else {
        let asg = assign_indices(trace, &model)?;
        let obj = objective(trace, &model, asg.indices())?;
        (model, asg, vec![obj])
    };

    let period = model.period_ns();
    if !(period > 0.5 * seed && period < 2.0 * seed) {
        return Err(Error::ImplausiblePeriod {
            period_ns: period,
            seed_ns: seed,
        });
    }
    let objective = *history.last().expect("history has an entry");
    let model = model.with_noise_sigma(residual_sigma(objective, trace.len()))?;
    Ok(PeriodEstimate {
        model,
        clusters,
        tau_init_ns: seed,
        objective,
        refined: options.refine,
        objective_history: history,
        assignment,
    })
}

#[cfg(test)]
mod tests;
