//! Jitter regime classification and a normality test.
//!
//! Consecutive differences are grouped by how many slots they span. A trace
//! without drops has a single group; one with drops has a group per gap size,
//! and the pooled differences then form a multi-modal mixture even when each
//! group is Gaussian.
//!
//! Normality uses the Anderson-Darling statistic against a normal law with
//! estimated mean and variance. The statistic is multiplied by
//! `1 + 0.75/n + 2.25/n^2` and converted to a p-value with the
//! D'Agostino-Stephens piecewise approximation:
//!
//! | modified A      | p-value                                   |
//! |-----------------|-------------------------------------------|
//! | `>= 0.6`        | `exp(1.2937 - 5.709 A + 0.0186 A^2)`      |
//! | `[0.34, 0.6)`   | `exp(0.9177 - 4.279 A - 1.38 A^2)`        |
//! | `[0.2, 0.34)`   | `1 - exp(-8.318 + 42.796 A - 59.938 A^2)` |
//! | `< 0.2`         | `1 - exp(-13.436 + 101.14 A - 223.73 A^2)`|
//!
//! The first branch turns upward past `A = 153.467`; beyond that the p-value
//! is reported as 0.

use serde::{Deserialize, Serialize};

use crate::estimator::{build_diff_series, solve_clustered_lsq, tau_init, ClusterStats};
use crate::model::TimestampTrace;
use crate::{Error, Result};

pub const MIN_CLASSIFY_LEN: usize = 20;
pub const MIN_NORMALITY_SAMPLES: usize = 8;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unimodal,
    MultiCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityOutcome {
    /// Modified Anderson-Darling statistic; `None` for zero variance.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub pass: bool,
    pub degenerate_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNormality {
    pub k: u64,
    pub count: usize,
    /// `None` when the cluster is too small to test.
    pub outcome: Option<NormalityOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseClassification {
    pub regime: Regime,
    pub clusters: Vec<ClusterStats>,
    /// Fraction of consecutive pairs spanning more than one slot.
    pub drop_rate: f64,
    pub normality: Vec<ClusterNormality>,
    /// Test on the raw, unclustered differences.
    pub pooled: Option<NormalityOutcome>,
    pub significance: f64,
}

/// Classifies at [`DEFAULT_SIGNIFICANCE`].
pub fn classify(trace: &TimestampTrace) -> Result<NoiseClassification> {
    classify_with(trace, DEFAULT_SIGNIFICANCE)
}

pub fn classify_with(trace: &TimestampTrace, significance: f64) -> Result<NoiseClassification> {
    check_significance(significance)?;
    if trace.len() < MIN_CLASSIFY_LEN {
        return Err(Error::TooShort(format!(
            "classification needs {MIN_CLASSIFY_LEN} timestamps, got {}",
            trace.len()
        )));
    }
    let series = build_diff_series(trace, tau_init(trace)?)?;
    let (tau, clusters) = solve_clustered_lsq(&series);
    let drops = series.delta_n().iter().filter(|k| **k > 1).count();
    let drop_rate = drops as f64 / series.len() as f64;

    let mut normality = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let outcome = if c.count >= MIN_NORMALITY_SAMPLES {
            let samples: Vec<f64> = series
                .cluster_samples(c.k)
                .into_iter()
                .map(|x| x - tau)
                .collect();
            Some(normality_check(&samples, significance)?)
        } else {
            None
        };
        normality.push(ClusterNormality {
            k: c.k,
            count: c.count,
            outcome,
        });
    }
    let pooled = if series.len() >= MIN_NORMALITY_SAMPLES {
        Some(normality_check(series.diffs(), significance)?)
    } else {
        None
    };
    let regime = if clusters.len() == 1 {
        Regime::Unimodal
    } else {
        Regime::MultiCluster
    };
    Ok(NoiseClassification {
        regime,
        clusters,
        drop_rate,
        normality,
        pooled,
        significance,
    })
}

fn check_significance(significance: f64) -> Result<()> {
    if significance > 0.0 && significance < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "significance must lie in (0, 1), got {significance}"
        )))
    }
}

/// Anderson-Darling test for normality with estimated mean and variance.
///
/// ```
/// use phasesync::noise::normality_check;
/// let flat = [3.0; 10];
/// let out = normality_check(&flat, 0.01).unwrap();
/// assert!(out.degenerate_variance && !out.pass);
/// ```
pub fn normality_check(samples: &[f64], significance: f64) -> Result<NormalityOutcome> {
    check_significance(significance)?;
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_NORMALITY_SAMPLES,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) {
        return Ok(NormalityOutcome {
            statistic: None,
            p_value: None,
            pass: false,
            degenerate_variance: true,
        });
    }
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_unstable_by(f64::total_cmp);
    let mut acc = 0.0;
    for i in 0..n {
        let lo = log_cdf(z[i]);
        let hi = log_cdf(-z[n - 1 - i]);
        acc += (2 * i + 1) as f64 * (lo + hi);
    }
    let a2 = -nf - acc / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = p_value(a);
    Ok(NormalityOutcome {
        statistic: Some(a),
        p_value: Some(p),
        pass: p >= significance,
        degenerate_variance: false,
    })
}

/// `ln Phi(z)`, clamped away from `-inf`.
fn log_cdf(z: f64) -> f64 {
    let phi = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    phi.max(1e-300).ln()
}

fn p_value(a: f64) -> f64 {
    let p = if a >= 153.467 {
        0.0
    } else if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::synth::{generate, TraceSpec};

    #[test]
    fn p_value_is_continuous_enough_and_monotone() {
        let mut prev = 1.0;
        let mut a = 0.01;
        while a < 200.0 {
            let p = p_value(a);
            assert!(p <= prev + 0.02, "a = {a}");
            prev = p;
            a *= 1.05;
        }
        assert_eq!(p_value(1000.0), 0.0);
    }

    #[test]
    fn known_critical_values() {
        // Tabulated case-3 critical points: 0.752 at 5%, 1.035 at 1%.
        assert!((p_value(0.752) - 0.05).abs() < 0.003);
        assert!((p_value(1.035) - 0.01).abs() < 0.001);
    }

    #[test]
    fn gaussian_passes_uniform_of_large_n_fails() {
        let mut rng = DetRng::new(5);
        let g: Vec<f64> = (0..500).map(|_| rng.gaussian()).collect();
        assert!(normality_check(&g, 0.01).unwrap().pass);
        let u: Vec<f64> = (0..2000).map(|_| rng.uniform()).collect();
        assert!(!normality_check(&u, 0.01).unwrap().pass);
    }

    #[test]
    fn guards() {
        assert_eq!(
            normality_check(&[1.0; 7], 0.01),
            Err(Error::TooFewSamples { needed: 8, got: 7 })
        );
        assert!(normality_check(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 0.0).is_err());
    }

    #[test]
    fn classify_clean_trace_is_unimodal() {
        let g = generate(
            &TraceSpec::new(33_333_333.0, 0.0, 200)
                .with_jitter(2e5)
                .with_seed(1),
        )
        .unwrap();
        let c = classify(&g.trace).unwrap();
        assert_eq!(c.regime, Regime::Unimodal);
        assert_eq!(c.drop_rate, 0.0);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].k, 1);
    }

    #[test]
    fn classify_drop_trace_is_multi_cluster() {
        let spec = TraceSpec::new(33_333_333.0, 0.0, 500)
            .with_jitter(2e5)
            .with_drop_prob(0.1)
            .with_seed(3);
        let c = classify(&generate(&spec).unwrap().trace).unwrap();
        assert_eq!(c.regime, Regime::MultiCluster);
        assert!(c.drop_rate > 0.05 && c.drop_rate < 0.2);
        assert!(!c.pooled.unwrap().pass);
        assert!(c.normality.iter().any(|n| n.outcome.is_none()) || c.normality.len() >= 2);
    }

    #[test]
    fn classify_too_short() {
        let g = generate(&TraceSpec::new(100.0, 0.0, 19)).unwrap();
        assert!(matches!(classify(&g.trace), Err(Error::TooShort(_))));
    }
}
