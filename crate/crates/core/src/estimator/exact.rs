//! Brute-force reference solver for short traces.
//!
//! For a fixed period the best phase and slot assignment can be found exactly:
//! with residues `u_i = (t_i - t_0) mod tau` sorted ascending, the optimal
//! assignment cuts the circle between two neighbouring residues, so one of the
//! `s` rotations `[u_j, .., u_{s-1}, u_0 + tau, .., u_{j-1} + tau]` holds the
//! optimum and its mean is the phase. The solver scans a uniform period grid,
//! polishes the best cell with golden-section search, and finishes with a
//! straight-line fit under the winning slot assignment.
//!
//! Grid points are evaluated in index order and ties keep the lowest index,
//! so the result is deterministic.

use super::{build_diff_series, cluster_stats, refine, residual_sigma, PeriodEstimate};
use crate::model::{assign_indices, objective, slot, PhaseModel, TimestampTrace};
use crate::{Error, Result};

pub const DEFAULT_GRID_STEPS: usize = 100_000;
pub const MAX_EXACT_LEN: usize = 64;

const GOLDEN_ITERATIONS: usize = 80;

#[derive(Debug, Clone, Copy)]
struct Profile {
    objective: f64,
    /// Phase relative to the first timestamp.
    phase: f64,
}

/// Exact inner solve for one period; `None` when two samples share a slot.
fn profile(y: &[f64], tau: f64, scratch: &mut Vec<f64>) -> Option<Profile> {
    let s = y.len();
    scratch.clear();
    scratch.extend(y.iter().map(|v| v.rem_euclid(tau)));
    scratch.sort_unstable_by(f64::total_cmp);
    let total: f64 = scratch.iter().sum();
    let total_sq: f64 = scratch.iter().map(|u| u * u).sum();
    let n = s as f64;

    let mut best_j = 0;
    let mut best = f64::INFINITY;
    let mut prefix = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        let jf = j as f64;
        let sum = total + jf * tau;
        let sq = total_sq + 2.0 * tau * prefix + jf * tau * tau;
        let obj = (sq - sum * sum / n).max(0.0);
        if obj < best {
            best = obj;
            best_j = j;
        }
        prefix += u;
    }
    let phase = (total + best_j as f64 * tau) / n;

    let mut prev = i64::MIN;
    for &v in y {
        let k = slot(v - phase, tau);
        if k <= prev {
            return None;
        }
        prev = k;
    }
    Some(Profile {
        objective: best,
        phase,
    })
}

fn eval(y: &[f64], tau: f64, scratch: &mut Vec<f64>) -> f64 {
    profile(y, tau, scratch).map_or(f64::INFINITY, |p| p.objective)
}

/// Global least-squares fit of `(phase, period)` and slot indices over
/// `[tau_lo, tau_hi]`.
///
/// Cost is `O(grid_steps * s log s)`; the trace length is capped at
/// [`MAX_EXACT_LEN`].
pub fn exact_solve(
    trace: &TimestampTrace,
    tau_lo: f64,
    tau_hi: f64,
    grid_steps: usize,
) -> Result<PeriodEstimate> {
    if trace.len() > MAX_EXACT_LEN {
        return Err(Error::TraceTooLong {
            len: trace.len(),
            max: MAX_EXACT_LEN,
        });
    }
    if !(tau_lo > 0.0 && tau_lo < tau_hi && tau_hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "period bounds [{tau_lo}, {tau_hi}] must satisfy 0 < lo < hi"
        )));
    }
    if grid_steps == 0 {
        return Err(Error::InvalidArgument("grid_steps must be positive".into()));
    }
    let ts = trace.timestamps();
    let t0 = ts[0];
    let y: Vec<f64> = ts.iter().map(|t| (t - t0) as f64).collect();
    let mut scratch = Vec::with_capacity(y.len());
    let step = (tau_hi - tau_lo) / grid_steps as f64;
    let at = |g: usize| {
        if g == grid_steps {
            tau_hi
        } else {
            tau_lo + step * g as f64
        }
    };

    let mut best: Option<(usize, f64)> = None;
    for g in 0..=grid_steps {
        let obj = eval(&y, at(g), &mut scratch);
        if obj.is_finite() && best.map_or(true, |(_, b)| obj < b) {
            best = Some((g, obj));
        }
    }
    let infeasible = Error::InfeasibleBand {
        lo_ns: tau_lo,
        hi_ns: tau_hi,
    };
    let (g, _) = best.ok_or_else(|| infeasible.clone())?;

    // Golden-section polish over the neighbouring cells.
    let mut a = at(g.saturating_sub(1));
    let mut b = at((g + 1).min(grid_steps));
    let mut best_tau = at(g);
    let mut best_obj = eval(&y, best_tau, &mut scratch);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = eval(&y, c, &mut scratch);
    let mut fd = eval(&y, d, &mut scratch);
    for _ in 0..GOLDEN_ITERATIONS {
        if fc < best_obj {
            best_obj = fc;
            best_tau = c;
        }
        if fd < best_obj {
            best_obj = fd;
            best_tau = d;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(&y, c, &mut scratch);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(&y, d, &mut scratch);
        }
    }
    let p = profile(&y, best_tau, &mut scratch).ok_or_else(|| infeasible.clone())?;
    let mut model = PhaseModel::new(t0 as f64 + p.phase, best_tau, 0.0)?;
    let mut asg = assign_indices(trace, &model).map_err(|_| infeasible.clone())?;
    let mut obj = objective(trace, &model, asg.indices())?;

    // Straight-line polish under the winning assignment; kept only if it
    // stays in the band and does not raise the objective.
    if let Ok(r) = refine(trace, model, 10) {
        let period = r.model.period_ns();
        let candidate = *r.history.last().expect("nonempty history");
        if period >= tau_lo && period <= tau_hi && candidate <= obj {
            model = r.model;
            asg = r.assignment;
            obj = candidate;
        }
    }

    let series = build_diff_series(trace, model.period_ns())?;
    Ok(PeriodEstimate {
        model: model.with_noise_sigma(residual_sigma(obj, trace.len()))?,
        clusters: cluster_stats(&series),
        tau_init_ns: super::tau_init(trace)?,
        objective: obj,
        refined: true,
        objective_history: vec![obj],
        assignment: asg,
    })
}
