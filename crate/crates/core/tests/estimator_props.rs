use phasesync::estimator::{build_diff_series, estimate, exact_solve, tau_init, EstimateOptions};
use phasesync::model::{wrap, TimestampTrace};
use phasesync::synth::{generate, TraceSpec};
use proptest::prelude::*;

const TAU: f64 = 1e9 / 30.0;

/// Least-squares standard deviations of slope and intercept (at slot 0) for
/// unit noise sampled at slots `n`.
fn ols_sd(n: &[i64]) -> (f64, f64) {
    let k = n.len() as f64;
    let mean = n.iter().sum::<i64>() as f64 / k;
    let sxx: f64 = n.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
    ((1.0 / sxx).sqrt(), (1.0 / k + mean * mean / sxx).sqrt())
}

#[test]
fn recovers_ground_truth_within_statistical_tolerance() {
    let mut worst: f64 = 0.0;
    for drop in [0.0, 0.1, 0.3] {
        for sigma in [50_000.0, 200_000.0, 1_000_000.0] {
            for seed in 0..10 {
                let spec = TraceSpec::new(TAU, 5e6, 600)
                    .with_jitter(sigma)
                    .with_drop_prob(drop)
                    .with_seed(seed);
                let g = generate(&spec).unwrap();
                let est = estimate(&g.trace, &EstimateOptions::default()).unwrap();
                let (sd_tau, sd_phase) = ols_sd(g.true_indices.indices());
                let dt = (est.model.period_ns() - TAU).abs() / (sigma * sd_tau);
                let dp = wrap(est.model.phase_ns() - 5e6, TAU).abs() / (sigma * sd_phase);
                worst = worst.max(dt).max(dp);
                assert!(
                    dt < 6.0 && dp < 6.0,
                    "drop {drop} sigma {sigma} seed {seed}: {dt} {dp}"
                );
                assert_eq!(est.assignment.gaps(), g.true_indices.gaps());
            }
        }
    }
    assert!(worst > 0.1, "errors suspiciously small: {worst}");
}

#[test]
fn slot_gaps_recovered_at_two_percent_jitter() {
    let (mut hit, mut total) = (0usize, 0usize);
    for seed in 0..20 {
        let spec = TraceSpec::new(TAU, 1e6, 1000)
            .with_jitter(0.02 * TAU)
            .with_drop_prob(0.1)
            .with_seed(seed);
        let g = generate(&spec).unwrap();
        let series = build_diff_series(&g.trace, tau_init(&g.trace).unwrap()).unwrap();
        let truth = g.true_indices.gaps();
        total += truth.len();
        hit += series
            .delta_n()
            .iter()
            .zip(&truth)
            .filter(|(a, b)| **a as i64 == **b)
            .count();
    }
    assert!(hit as f64 > 0.99 * total as f64, "{hit}/{total}");
}

fn short_trace() -> impl Strategy<Value = (Vec<i64>, f64)> {
    (
        1e6f64..5e7,
        0.0f64..1.0,
        proptest::collection::vec(1i64..5, 3..15),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(tau, frac, mut gaps, one)| {
            // At least one adjacent pair, so the minimum difference is one period.
            let i = one.index(gaps.len());
            gaps[i] = 1;
            let mut slot = 0i64;
            let mut ts = vec![(frac * tau).round() as i64];
            for g in gaps {
                slot += g;
                ts.push((frac * tau + slot as f64 * tau).round() as i64);
            }
            (ts, tau)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_matches_oracle_on_noiseless_short_traces((ts, tau) in short_trace()) {
        let t = TimestampTrace::synthetic("p", ts).unwrap();
        let opts = EstimateOptions { min_samples: 2, ..EstimateOptions::default() };
        let est = estimate(&t, &opts).unwrap();
        let ex = exact_solve(&t, 0.9 * tau, 1.1 * tau, 20_000).unwrap();
        let p = ex.model.period_ns();
        prop_assert!((est.model.period_ns() - p).abs() <= 1e-6 * p);
        prop_assert!(wrap(est.model.phase_ns() - ex.model.phase_ns(), p).abs() <= 1e-6 * p);
        prop_assert_eq!(est.assignment.relative(), ex.assignment.relative());
    }

    #[test]
    fn oracle_never_worse_than_estimate(seed in 0u64..10_000, n in 6usize..16) {
        let spec = TraceSpec::new(TAU, 2e6, n).with_jitter(0.02 * TAU).with_seed(seed);
        let t = generate(&spec).unwrap().trace;
        let opts = EstimateOptions { min_samples: 2, ..EstimateOptions::default() };
        let est = estimate(&t, &opts).unwrap();
        let ex = exact_solve(&t, 0.9 * TAU, 1.1 * TAU, 20_000).unwrap();
        prop_assert!(ex.objective <= est.objective * (1.0 + 1e-9) + 1e-6);
    }
}
