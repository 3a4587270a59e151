use super::*;
use crate::model::validate_trace;
use proptest::prelude::*;

const MS: i64 = 1_000_000;

fn grid(phase: i64, tau: i64, slots: &[i64]) -> TimestampTrace {
    validate_trace(&slots.iter().map(|n| phase + n * tau).collect::<Vec<_>>()).unwrap()
}

#[test]
fn tau_init_examples() {
    let t = validate_trace(&[0, 10 * MS, 21 * MS, 30 * MS]).unwrap();
    assert_eq!(tau_init(&t).unwrap(), 9e6);
    assert_eq!(tau_init(&grid(0, 33, &[0, 1, 2, 3])).unwrap(), 33.0);
    assert_eq!(tau_init(&grid(0, 10 * MS, &[0, 1, 2, 4, 5])).unwrap(), 1e7);
}

#[test]
fn percentile_seed_ignores_one_short_gap() {
    let mut ts: Vec<i64> = (0..100).map(|n| n * 1000).collect();
    ts.insert(50, 49_010);
    let t = validate_trace(&ts).unwrap();
    assert_eq!(tau_seed(&t, SeedMode::Minimum), 10.0);
    assert_eq!(tau_seed(&t, SeedMode::Percentile5), 1000.0);
}

#[test]
fn diff_series_examples() {
    let t = grid(0, 10 * MS, &[0, 1, 2, 4, 5]);
    let s = build_diff_series(&t, 1e7).unwrap();
    assert_eq!(s.diffs(), &[1e7, 1e7, 2e7, 1e7]);
    assert_eq!(s.delta_n(), &[1, 1, 2, 1]);

    let t = grid(3, 33, &(0..20).collect::<Vec<_>>());
    assert!(build_diff_series(&t, 33.0)
        .unwrap()
        .delta_n()
        .iter()
        .all(|k| *k == 1));
}

#[test]
fn diff_series_degenerate_seed() {
    let t = grid(0, 10, &[0, 1, 2]);
    assert_eq!(
        build_diff_series(&t, 100.0),
        Err(Error::DegenerateSeed {
            index: 1,
            seed_ns: 100.0
        })
    );
    assert_eq!(
        build_diff_series(&t, 0.0),
        Err(Error::NonPositivePeriod(0.0))
    );
}

#[test]
fn diff_series_rejects_bad_input() {
    assert!(DiffSeries::new(vec![], vec![]).is_err());
    assert!(DiffSeries::new(vec![1.0], vec![0]).is_err());
    assert!(DiffSeries::new(vec![-1.0], vec![1]).is_err());
    assert!(DiffSeries::new(vec![1.0], vec![1, 1]).is_err());
}

#[test]
fn clustered_lsq_examples() {
    let s = DiffSeries::new(vec![10.1, 9.9], vec![1, 1]).unwrap();
    assert!((solve_clustered_lsq(&s).0 - 10.0).abs() < 1e-12);

    let s = DiffSeries::new(vec![10.1, 9.9, 20.2], vec![1, 1, 2]).unwrap();
    let (tau, clusters) = solve_clustered_lsq(&s);
    let closed = (10.1 + 9.9 + 2.0 * 20.2) / (1.0 + 1.0 + 4.0);
    assert!((tau - closed).abs() < 1e-12 * closed);
    assert!((tau - 60.4 / 6.0).abs() < 1e-12);
    assert_eq!(clusters.len(), 2);
    assert_eq!((clusters[0].k, clusters[0].count), (1, 2));
    assert!((clusters[1].tau_hat_ns - 10.1).abs() < 1e-12);
    assert_eq!(clusters[1].sigma_hat_ns, 0.0);

    let s = DiffSeries::new(vec![20.0, 20.4], vec![2, 2]).unwrap();
    assert!((solve_clustered_lsq(&s).0 - 10.1).abs() < 1e-12);
}

#[test]
fn inverse_variance_weights() {
    // Cluster 1 is tight around 10, cluster 2 is loose around 10.5 per slot.
    let mut diffs = vec![10.0, 10.01, 9.99, 10.0, 10.02, 9.98];
    let mut ks = vec![1u64; 6];
    diffs.extend([19.0, 23.0, 21.0, 20.0, 22.0]);
    ks.extend([2u64; 5]);
    let s = DiffSeries::new(diffs, ks).unwrap();
    let (plain, clusters) = solve_clustered_lsq(&s);
    let (iv, _) = solve_clustered_lsq_with(&s, ClusterWeighting::InverseVariance);
    let w: Vec<f64> = clusters
        .iter()
        .map(|c| c.count as f64 * (c.k * c.k) as f64 / c.sigma_hat_ns.powi(2))
        .collect();
    let expect = (w[0] * clusters[0].tau_hat_ns + w[1] * clusters[1].tau_hat_ns) / (w[0] + w[1]);
    assert!((iv - expect).abs() < 1e-12 * expect);
    assert!((iv - 10.0).abs() < (plain - 10.0).abs());

    // Too few members: falls back to the default weights.
    let s = DiffSeries::new(vec![10.0, 10.2, 20.0], vec![1, 1, 2]).unwrap();
    assert_eq!(
        solve_clustered_lsq_with(&s, ClusterWeighting::InverseVariance).0,
        solve_clustered_lsq(&s).0
    );
}

#[test]
fn phase_examples() {
    let t = grid(5 * MS, 33 * MS, &(0..30).collect::<Vec<_>>());
    assert!((estimate_phase(&t, 33e6).unwrap() - 5e6).abs() < 1e-6);
    let t = grid(0, 33, &[0, 1, 2, 7]);
    assert_eq!(estimate_phase(&t, 33.0).unwrap(), 0.0);

    // Straddling the wrap point averages to the wrap point.
    let tau = 33 * MS;
    let t = validate_trace(&[tau - 1000, tau + 1000]).unwrap();
    let p = estimate_phase(&t, tau as f64).unwrap();
    assert!(crate::model::wrap(p, tau as f64).abs() < 1e-6, "{p}");
    assert!(estimate_phase(&t, 0.0).is_err());
}

#[test]
fn phase_for_period_is_exact_on_integer_grid() {
    let t = grid(123_456, 33_333_333, &[0, 1, 3, 4, 8, 9, 10]);
    assert_eq!(phase_for_period(&t, 33_333_333.0).unwrap(), 123_456.0);
}

#[test]
fn estimate_noiseless_recovers_exactly() {
    let t = grid(5 * MS, 33 * MS, &(0..50).collect::<Vec<_>>());
    let e = estimate(&t, &EstimateOptions::default()).unwrap();
    assert_eq!(e.model.period_ns(), 33e6);
    assert_eq!(e.model.phase_ns(), 5e6);
    assert_eq!(e.objective, 0.0);
    assert!(e.refined);
    assert_eq!(e.tau_init_ns, 33e6);
}

#[test]
fn estimate_with_drops_keeps_gaps() {
    let slots = [0, 1, 2, 5, 6, 7, 9, 10, 11, 12, 15];
    let t = grid(7 * MS, 33 * MS, &slots);
    let e = estimate(&t, &EstimateOptions::default()).unwrap();
    assert_eq!(e.assignment.relative(), slots.to_vec());
    assert_eq!(
        e.clusters.iter().map(|c| c.k).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}

#[test]
fn estimate_requires_min_samples() {
    let t = grid(0, 10, &[0, 1, 2]);
    assert_eq!(
        estimate(&t, &EstimateOptions::default()),
        Err(Error::TooFewSamples { needed: 10, got: 3 })
    );
}

#[test]
fn estimate_without_refine_uses_closed_form() {
    let ts: Vec<i64> = (0..20)
        .map(|n| 1_000 + n * 33_000 + if n % 2 == 0 { 40 } else { -40 })
        .collect();
    let t = validate_trace(&ts).unwrap();
    let opts = EstimateOptions {
        refine: false,
        ..Default::default()
    };
    let e = estimate(&t, &opts).unwrap();
    assert!(!e.refined);
    assert_eq!(e.objective_history.len(), 1);
    let closed = solve_clustered_lsq(&build_diff_series(&t, tau_init(&t).unwrap()).unwrap()).0;
    assert_eq!(e.model.period_ns(), closed);
}

#[test]
fn refine_does_not_raise_objective() {
    let ts: Vec<i64> = (0..40)
        .filter(|n| n % 7 != 3)
        .map(|n| 2_000 + n * 33_333 + ((n * 37) % 11 - 5) * 300)
        .collect();
    let t = validate_trace(&ts).unwrap();
    let e = estimate(&t, &EstimateOptions::default()).unwrap();
    for w in e.objective_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", e.objective_history);
    }
}

#[test]
fn exact_solve_examples() {
    let t = grid(2 * MS, 10 * MS, &[0, 1, 2, 3, 4, 5]);
    let e = exact_solve(&t, 8e6, 12e6, 20_000).unwrap();
    assert_eq!(e.objective, 0.0);
    assert_eq!(e.model.period_ns(), 1e7);
    assert_eq!(e.model.phase_ns(), 2e6);

    let t = grid(2 * MS, 10 * MS, &[0, 1, 3, 4, 5]);
    let e = exact_solve(&t, 8e6, 12e6, 20_000).unwrap();
    assert_eq!(e.model.period_ns(), 1e7);
    assert_eq!(e.model.phase_ns(), 2e6);
    assert_eq!(e.assignment.relative(), vec![0, 1, 3, 4, 5]);
}

#[test]
fn exact_solve_guards() {
    let long = grid(0, 10, &(0..65).collect::<Vec<_>>());
    assert_eq!(
        exact_solve(&long, 8.0, 12.0, 10),
        Err(Error::TraceTooLong { len: 65, max: 64 })
    );
    let t = grid(0, 10, &[0, 1, 2]);
    assert!(exact_solve(&t, 12.0, 8.0, 10).is_err());
    assert!(exact_solve(&t, 8.0, 12.0, 0).is_err());
    // Every period in the band puts two of these samples in one slot.
    let t = validate_trace(&[0, 1, 2, 3]).unwrap();
    assert!(matches!(
        exact_solve(&t, 100.0, 200.0, 50),
        Err(Error::InfeasibleBand { .. })
    ));
}

#[test]
fn exact_solve_beats_or_ties_estimate_on_noisy_short_trace() {
    let ts: Vec<i64> = [0i64, 1, 2, 4, 5, 6, 7, 9]
        .iter()
        .zip([300i64, -200, 50, -400, 100, 250, -150, 0])
        .map(|(n, e)| 4_000_000 + n * 33_333_333 + e * 1000)
        .collect();
    let t = validate_trace(&ts).unwrap();
    let opts = EstimateOptions {
        min_samples: 2,
        ..Default::default()
    };
    let est = estimate(&t, &opts).unwrap();
    let ex = exact_solve(&t, 0.9 * 33_333_333.0, 1.1 * 33_333_333.0, 20_000).unwrap();
    assert!(ex.objective <= est.objective * (1.0 + 1e-9));
}

fn diff_series_strategy() -> impl Strategy<Value = DiffSeries> {
    proptest::collection::vec((1.0f64..1e8, 1u64..6), 1..200).prop_map(|v| {
        let (d, k): (Vec<f64>, Vec<u64>) = v.into_iter().unzip();
        DiffSeries::new(d, k).unwrap()
    })
}

fn jittered(phase: i64, tau: i64, n: usize, noise: &[i64], drops: &[bool]) -> Vec<i64> {
    (0..n as i64)
        .filter(|i| *i == 0 || !drops[*i as usize % drops.len()])
        .map(|i| phase + i * tau + noise[i as usize % noise.len()])
        .collect()
}

proptest! {
    #[test]
    fn default_weights_equal_closed_form(s in diff_series_strategy()) {
        let (tau, _) = solve_clustered_lsq(&s);
        let num: f64 = s.diffs().iter().zip(s.delta_n()).map(|(d, k)| *k as f64 * d).sum();
        let den: f64 = s.delta_n().iter().map(|k| (*k * *k) as f64).sum();
        prop_assert!((tau - num / den).abs() <= 1e-12 * (num / den));
    }

    #[test]
    fn translation_invariance(
        phase in 0i64..33_000_000,
        noise in proptest::collection::vec(-500_000i64..500_000, 40),
        shift in -1_000_000_000_000i64..1_000_000_000_000,
    ) {
        let ts = jittered(phase, 33_333_333, 40, &noise, &[false]);
        let t = validate_trace(&ts).unwrap();
        let a = estimate(&t, &EstimateOptions::default()).unwrap().model;
        let b = estimate(&t.shifted(shift), &EstimateOptions::default()).unwrap().model;
        prop_assert!((a.period_ns() - b.period_ns()).abs() <= 1e-9 * a.period_ns());
        let moved = crate::model::wrap(a.phase_ns() + shift as f64 - b.phase_ns(), a.period_ns());
        prop_assert!(moved.abs() <= 1e-9 * a.period_ns() + 1e-3);
    }

    #[test]
    fn scale_equivariance(
        phase in 0i64..33_000,
        noise in proptest::collection::vec(-500i64..500, 40),
        scale in 1i64..50,
    ) {
        let ts = jittered(phase, 33_333, 40, &noise, &[false]);
        let t = validate_trace(&ts).unwrap();
        let scaled = validate_trace(&ts.iter().map(|v| v * scale).collect::<Vec<_>>()).unwrap();
        let a = estimate(&t, &EstimateOptions::default()).unwrap().model;
        let b = estimate(&scaled, &EstimateOptions::default()).unwrap().model;
        let s = scale as f64;
        prop_assert!((a.period_ns() * s - b.period_ns()).abs() <= 1e-9 * b.period_ns());
        prop_assert!(crate::model::wrap(a.phase_ns() * s - b.phase_ns(), b.period_ns()).abs() <= 1e-6 * b.period_ns());
    }

    #[test]
    fn drops_leave_noiseless_fit_unchanged(
        phase in 0i64..33_333_333,
        keep in proptest::collection::vec(proptest::bool::weighted(0.7), 98),
    ) {
        let full: Vec<i64> = (0..100).map(|n| phase + n * 33_333_333).collect();
        let mut thinned = vec![full[0]];
        thinned.extend(full[1..99].iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| *t));
        thinned.push(full[99]);
        prop_assume!(thinned.len() >= 10);
        let a = estimate(&validate_trace(&full).unwrap(), &EstimateOptions::default()).unwrap().model;
        let b = estimate(&validate_trace(&thinned).unwrap(), &EstimateOptions::default()).unwrap().model;
        prop_assert_eq!(a.period_ns().to_bits(), b.period_ns().to_bits());
        prop_assert_eq!(a.phase_ns().to_bits(), b.phase_ns().to_bits());
    }

    #[test]
    fn refine_objective_is_nonincreasing(
        noise in proptest::collection::vec(-4_000_000i64..4_000_000, 60),
        drops in proptest::collection::vec(proptest::bool::weighted(0.15), 60),
    ) {
        let ts = jittered(1_000_000, 33_333_333, 60, &noise, &drops);
        let t = validate_trace(&ts).unwrap();
        if let Ok(e) = estimate(&t, &EstimateOptions::default()) {
            for w in e.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-6);
            }
        }
    }
}
