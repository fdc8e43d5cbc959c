//! Relative frequencies, the multinomial error model, `z` tests for any
//! linear combination, the compensation ratio and chi-square goodness of fit.

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequality::{dot, CoefficientVector};
use crate::model::{ProbabilityQuad, OUTCOME_LABELS};
use crate::simulator::CountsRecord;
use crate::special::chi_square_sf;

/// Standard errors below this are treated as zero.
pub const DEGENERATE_SIGMA: f64 = 1e-12;
/// Model probabilities below this are treated as zero in chi-square sums.
pub const ZERO_PROBABILITY: f64 = 1e-12;

/// Relative outcome frequencies at one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalQuad {
    pub p: [f64; 4],
    pub n: u64,
}

impl EmpiricalQuad {
    pub fn p_pp(&self) -> f64 {
        self.p[0]
    }

    pub fn p_pm(&self) -> f64 {
        self.p[1]
    }

    pub fn p_mp(&self) -> f64 {
        self.p[2]
    }

    pub fn p_mm(&self) -> f64 {
        self.p[3]
    }

    pub fn as_quad(&self) -> ProbabilityQuad {
        ProbabilityQuad::from_array_unchecked(self.p)
    }
}

pub fn empirical_quad(record: &CountsRecord) -> Result<EmpiricalQuad> {
    let n = record.total();
    if n == 0 {
        return Err(Error::ZeroTotal);
    }
    let total = n as f64;
    Ok(EmpiricalQuad {
        p: record.counts.map(|k| k as f64 / total),
        n,
    })
}

/// Covariance of the relative frequencies of `n` multinomial trials with
/// cell probabilities `p`.
pub fn covariance_at(p: &[f64; 4], n: u64) -> Matrix4<f64> {
    let n = n as f64;
    Matrix4::from_fn(|i, j| {
        if i == j {
            p[i] * (1.0 - p[i]) / n
        } else {
            -p[i] * p[j] / n
        }
    })
}

pub fn multinomial_covariance(quad: &EmpiricalQuad) -> Matrix4<f64> {
    covariance_at(&quad.p, quad.n)
}

/// `c' Sigma c` for the multinomial covariance at `p`, written as the
/// variance of `c` under `p`. Constant `c` gives exactly zero up to
/// rounding in `sum(p)`.
pub fn linear_combination_variance(c: &[f64; 4], p: &[f64; 4], n: u64) -> f64 {
    let mean = dot(c, p);
    let second: f64 = (0..4).map(|i| p[i] * (c[i] - mean) * (c[i] - mean)).sum();
    second.max(0.0) / n as f64
}

/// Which quad supplies the variance of a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    /// The model's own prediction (null hypothesis).
    #[default]
    Predicted,
    /// The observed relative frequencies.
    Empirical,
}

/// Outcome of testing one coefficient vector at one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub c: CoefficientVector,
    pub observed: f64,
    pub predicted: f64,
    pub sigma: f64,
    pub z: f64,
    pub compensation_ratio: f64,
    pub degenerate: bool,
}

pub fn evaluate_test(c: &CoefficientVector, empirical: &EmpiricalQuad, predicted: &ProbabilityQuad) -> TestResult {
    evaluate_test_with(c, empirical, predicted, VarianceSource::Predicted)
}

pub fn evaluate_test_with(
    c: &CoefficientVector,
    empirical: &EmpiricalQuad,
    predicted: &ProbabilityQuad,
    variance: VarianceSource,
) -> TestResult {
    let coef = c.as_array();
    let model = predicted.as_array();
    let observed = dot(&coef, &empirical.p);
    let expected = dot(&coef, &model);
    let p_var = match variance {
        VarianceSource::Predicted => &model,
        VarianceSource::Empirical => &empirical.p,
    };
    let sigma = linear_combination_variance(&coef, p_var, empirical.n).sqrt();
    let delta: [f64; 4] = std::array::from_fn(|i| empirical.p[i] - model[i]);
    let degenerate = sigma < DEGENERATE_SIGMA;
    TestResult {
        c: *c,
        observed,
        predicted: expected,
        sigma,
        z: if degenerate { 0.0 } else { (observed - expected) / sigma },
        compensation_ratio: compensation_ratio(c, &delta),
        degenerate,
    }
}

/// `|sum c_i d_i| / sum |c_i d_i|`: 0 when the deviations cancel completely
/// inside the test, 1 when they all push the same way. Zero denominators
/// give 0.
pub fn compensation_ratio(c: &CoefficientVector, delta: &[f64; 4]) -> f64 {
    let coef = c.as_array();
    let terms: [f64; 4] = std::array::from_fn(|i| coef[i] * delta[i]);
    let denom: f64 = terms.iter().map(|t| t.abs()).sum();
    if denom < 1e-15 {
        return 0.0;
    }
    (terms.iter().sum::<f64>().abs() / denom).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of the counts against model quads, summed over all
/// setting pairs; `dof = 3 * pairs - fitted_parameters`.
pub fn chi_square_statistic(
    dataset: &[(CountsRecord, ProbabilityQuad)],
    fitted_parameters: usize,
) -> Result<ChiSquare> {
    let pairs = dataset.len();
    if pairs == 0 {
        return Err(Error::EmptyDataset);
    }
    if 3 * pairs <= fitted_parameters {
        return Err(Error::NoDegreesOfFreedom {
            pairs,
            free: fitted_parameters,
        });
    }
    let terms = dataset
        .par_iter()
        .map(|(record, quad)| pair_chi_square(record, quad))
        .collect::<Result<Vec<_>>>()?;
    let chi2 = neumaier_sum(terms);
    let dof = 3 * pairs - fitted_parameters;
    Ok(ChiSquare {
        chi2,
        dof,
        p_value: chi_square_sf(chi2, dof),
    })
}

/// Chi-square contribution of one setting pair.
pub fn pair_chi_square(record: &CountsRecord, quad: &ProbabilityQuad) -> Result<f64> {
    let n = record.total() as f64;
    let mut sum = 0.0;
    for (i, (&observed, &p)) in record.counts.iter().zip(quad.as_array().iter()).enumerate() {
        if p < ZERO_PROBABILITY {
            if observed > 0 {
                return Err(Error::ImpossibleOutcome {
                    outcome: OUTCOME_LABELS[i],
                    count: observed,
                    alpha_deg: record.settings.alpha_deg(),
                    beta_deg: record.settings.beta_deg(),
                });
            }
            continue;
        }
        let expected = n * p;
        let diff = observed as f64 - expected;
        sum += diff * diff / expected;
    }
    Ok(sum)
}

/// Compensated summation in a fixed order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnalyzerSettings;
    use crate::rng::Stream;
    use crate::simulator::sample_counts;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector4;
    use proptest::prelude::*;

    fn record(counts: [u64; 4]) -> CountsRecord {
        CountsRecord {
            settings: AnalyzerSettings::new(0.0, 0.0).unwrap(),
            counts,
        }
    }

    fn quad(p: [f64; 4]) -> ProbabilityQuad {
        ProbabilityQuad::from_array(p).unwrap()
    }

    #[test]
    fn empirical_examples() {
        let q = empirical_quad(&record([50, 0, 0, 50])).unwrap();
        assert_eq!((q.p, q.n), ([0.5, 0.0, 0.0, 0.5], 100));
        let q = empirical_quad(&record([1, 1, 1, 1])).unwrap();
        assert_eq!((q.p, q.n), ([0.25; 4], 4));
        let q = empirical_quad(&record([3, 1, 0, 0])).unwrap();
        assert_eq!((q.p, q.n), ([0.75, 0.25, 0.0, 0.0], 4));
        assert!(matches!(empirical_quad(&record([0; 4])), Err(Error::ZeroTotal)));
    }

    #[test]
    fn covariance_examples() {
        let s = covariance_at(&[0.5, 0.0, 0.0, 0.5], 100);
        assert_abs_diff_eq!(s[(0, 0)], 0.0025, epsilon = 1e-18);
        assert_abs_diff_eq!(s[(0, 3)], -0.0025, epsilon = 1e-18);
        for j in 0..4 {
            assert_eq!(s[(1, j)], 0.0);
            assert_eq!(s[(j, 1)], 0.0);
        }
        assert_eq!(covariance_at(&[1.0, 0.0, 0.0, 0.0], 17), Matrix4::zeros());
        let s = covariance_at(&[0.25; 4], 400);
        for i in 0..4 {
            assert_abs_diff_eq!(s[(i, i)], 4.6875e-4, epsilon = 1e-18);
        }
    }

    #[test]
    fn variance_form_matches_quadratic_form() {
        let p = [0.4, 0.1, 0.15, 0.35];
        let sigma = covariance_at(&p, 1000);
        for coef in [[1.0, -1.0, -1.0, 1.0], [1.0, 0.0, 0.0, -1.0], [0.3, -2.0, 0.7, 1.1]] {
            let v = Vector4::from(coef);
            let quadratic = (v.transpose() * sigma * v)[(0, 0)];
            assert_abs_diff_eq!(linear_combination_variance(&coef, &p, 1000), quadratic, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalization_test_is_degenerate() {
        let emp = empirical_quad(&record([510, 20, 30, 440])).unwrap();
        let t = evaluate_test(&CoefficientVector::NORMALIZATION, &emp, &quad([0.4, 0.1, 0.1, 0.4]));
        assert!(t.degenerate);
        assert_eq!(t.z, 0.0);
        assert_abs_diff_eq!(t.observed, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.predicted, 1.0, epsilon = 1e-15);
        assert!(t.sigma < DEGENERATE_SIGMA);
    }

    #[test]
    fn compensating_anomaly_is_invisible_to_correlation() {
        let emp = empirical_quad(&record([52_000, 0, 0, 48_000])).unwrap();
        let pred = quad([0.5, 0.0, 0.0, 0.5]);

        let t = evaluate_test(&CoefficientVector::CORRELATION, &emp, &pred);
        assert!((t.observed - t.predicted).abs() <= 1e-15);
        assert_eq!(t.z, 0.0);
        assert!(t.compensation_ratio < 1e-12);

        let t = evaluate_test(&CoefficientVector::SAME_IMBALANCE, &emp, &pred);
        assert_abs_diff_eq!(t.observed - t.predicted, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(t.sigma, 1e-5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.z, 0.04 / 1e-5f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(t.z, 12.649110640673518, epsilon = 1e-9);
        assert_eq!(t.compensation_ratio, 1.0);
    }

    #[test]
    fn bootstrap_variance_agrees_with_formula() {
        // Replicate the n = 1e5 draw at (0.5, 0, 0, 0.5) 1e4 times; the
        // spread of p++ - p-- must match sqrt(c' Sigma c).
        let pred = quad([0.5, 0.0, 0.0, 0.5]);
        let n = 100_000u64;
        let reps = 10_000u64;
        let values: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut s = Stream::new(99, r);
                let k = sample_counts(&pred, n, &mut s);
                (k[0] as f64 - k[3] as f64) / n as f64
            })
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        // The sample variance has relative standard error sqrt(2/reps) ~ 1.4%.
        assert!((var / 1e-5 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn empirical_variance_option() {
        let emp = empirical_quad(&record([600, 0, 0, 400])).unwrap();
        let pred = quad([0.5, 0.0, 0.0, 0.5]);
        let t = evaluate_test_with(&CoefficientVector::SAME_IMBALANCE, &emp, &pred, VarianceSource::Empirical);
        // Var of (+1, -1) with p = 0.6/0.4: 1 - 0.2^2 = 0.96.
        assert_abs_diff_eq!(t.sigma, (0.96f64 / 1000.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn compensation_ratio_examples() {
        let d = 0.013;
        assert_eq!(compensation_ratio(&CoefficientVector::CORRELATION, &[d, 0.0, 0.0, -d]), 0.0);
        assert_eq!(compensation_ratio(&CoefficientVector::SAME_IMBALANCE, &[d, 0.0, 0.0, -d]), 1.0);
        assert_eq!(compensation_ratio(&CoefficientVector::CORRELATION, &[d, 0.0, 0.0, 0.0]), 1.0);
        assert_eq!(compensation_ratio(&CoefficientVector::CORRELATION, &[0.0; 4]), 0.0);
    }

    #[test]
    fn chi_square_examples() {
        let exact = vec![
            (record([250, 250, 250, 250]), quad([0.25; 4])),
            (record([40, 10, 10, 40]), quad([0.4, 0.1, 0.1, 0.4])),
        ];
        let r = chi_square_statistic(&exact, 0).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.dof, 6);
        assert_eq!(r.p_value, 1.0);

        let one = vec![(record([60, 40, 0, 0]), quad([0.5, 0.5, 0.0, 0.0]))];
        let r = chi_square_statistic(&one, 0).unwrap();
        assert_abs_diff_eq!(r.chi2, 4.0, epsilon = 1e-12);
        assert_eq!(r.dof, 3);

        let bad = vec![(record([50, 3, 0, 47]), quad([0.5, 0.0, 0.0, 0.5]))];
        match chi_square_statistic(&bad, 0) {
            Err(Error::ImpossibleOutcome { outcome, count, .. }) => {
                assert_eq!(outcome, "+-");
                assert_eq!(count, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(chi_square_statistic(&one, 3), Err(Error::NoDegreesOfFreedom { .. })));
        assert!(matches!(chi_square_statistic(&[], 0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn chi_square_is_schedule_independent() {
        let data: Vec<_> = (0..64)
            .map(|k| {
                let mut s = Stream::new(5, k);
                let q = quad([0.3, 0.2, 0.1, 0.4]);
                (record(sample_counts(&q, 1000, &mut s)), q)
            })
            .collect();
        let a = chi_square_statistic(&data, 0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| chi_square_statistic(&data, 0)).unwrap();
        assert_eq!(a.chi2.to_bits(), b.chi2.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn compensation_ratio_bounds(
            cv in proptest::array::uniform4(-3.0..3.0f64),
            d in proptest::array::uniform4(-0.1..0.1f64),
        ) {
            if let Ok(cv) = CoefficientVector::from_array(cv) {
                let rho = compensation_ratio(&cv, &d);
                prop_assert!((0.0..=1.0).contains(&rho));
                let a = cv.as_array();
                let products: Vec<f64> = (0..4).map(|i| a[i] * d[i]).collect();
                if products.iter().all(|x| *x >= 0.0) || products.iter().all(|x| *x <= 0.0) {
                    if products.iter().map(|x| x.abs()).sum::<f64>() >= 1e-15 {
                        prop_assert!((rho - 1.0).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn normalization_always_degenerate(counts in proptest::array::uniform4(0u64..10_000), w in proptest::array::uniform4(0.01..1.0f64)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let s: f64 = w.iter().sum();
            let pred = ProbabilityQuad::from_array_unchecked(w.map(|x| x / s));
            let emp = empirical_quad(&record(counts)).unwrap();
            let t = evaluate_test(&CoefficientVector::NORMALIZATION, &emp, &pred);
            prop_assert!(t.degenerate);
        }

        #[test]
        fn z_sigma_identity(counts in proptest::array::uniform4(1u64..10_000), cv in proptest::array::uniform4(-3.0..3.0f64)) {
            let emp = empirical_quad(&record(counts)).unwrap();
            let pred = quad([0.3, 0.2, 0.1, 0.4]);
            if let Ok(cv) = CoefficientVector::from_array(cv) {
                let t = evaluate_test(&cv, &emp, &pred);
                if !t.degenerate {
                    prop_assert!((t.z * t.sigma - (t.observed - t.predicted)).abs() < 1e-10);
                }
            }
        }
    }
}
