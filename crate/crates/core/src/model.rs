//! Closed-form outcome probabilities for polarization-entangled photon pairs
//! and a deterministic local hidden-variable model.
//!
//! Outcomes are indexed in the fixed order `++, +-, -+, --`, where the first
//! sign belongs to analyzer A (angle `alpha`) and the second to analyzer B
//! (angle `beta`).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of each joint outcome inside a quad.
pub const PP: usize = 0;
pub const PM: usize = 1;
pub const MP: usize = 2;
pub const MM: usize = 3;

/// Labels in quad order.
pub const OUTCOME_LABELS: [&str; 4] = ["++", "+-", "-+", "--"];

/// Tolerance on the normalization of a [`ProbabilityQuad`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Orientation of both analyzers, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSettings {
    pub alpha: f64,
    pub beta: f64,
}

impl AnalyzerSettings {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::NonFiniteAngle { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub fn from_degrees(alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        Self::new(alpha_deg.to_radians(), beta_deg.to_radians())
    }

    pub fn alpha_deg(&self) -> f64 {
        self.alpha.to_degrees()
    }

    pub fn beta_deg(&self) -> f64 {
        self.beta.to_degrees()
    }

    /// Settings rotated by systematic analyzer offsets.
    pub fn shifted(&self, alpha_offset: f64, beta_offset: f64) -> Result<Self> {
        Self::new(self.alpha + alpha_offset, self.beta + beta_offset)
    }

    /// Relative angle folded into `[0, pi)`.
    pub fn folded_delta(&self) -> f64 {
        (self.alpha - self.beta).rem_euclid(PI)
    }

    fn check(&self) -> Result<()> {
        Self::new(self.alpha, self.beta).map(|_| ())
    }
}

/// Joint outcome probabilities `(P++, P+-, P-+, P--)` at one setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ProbabilityQuad([f64; 4]);

impl ProbabilityQuad {
    pub const UNIFORM: ProbabilityQuad = ProbabilityQuad([0.25; 4]);

    pub fn new(p_pp: f64, p_pm: f64, p_mp: f64, p_mm: f64) -> Result<Self> {
        Self::from_array([p_pp, p_pm, p_mp, p_mm])
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidQuad(format!("non-finite component in {p:?}")));
        }
        if let Some(x) = p.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidQuad(format!("component {x} outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidQuad(format!("components sum to {sum}")));
        }
        Ok(Self(p))
    }

    /// Skips validation. Callers guarantee the invariants by construction.
    pub(crate) fn from_array_unchecked(p: [f64; 4]) -> Self {
        debug_assert!(p.iter().all(|x| *x >= 0.0), "{p:?}");
        Self(p)
    }

    pub fn p_pp(&self) -> f64 {
        self.0[PP]
    }

    pub fn p_pm(&self) -> f64 {
        self.0[PM]
    }

    pub fn p_mp(&self) -> f64 {
        self.0[MP]
    }

    pub fn p_mm(&self) -> f64 {
        self.0[MM]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    /// `v * self + (1 - v) * uniform`.
    pub fn mix_with_uniform(&self, visibility: f64) -> Self {
        let noise = 0.25 * (1.0 - visibility);
        Self(self.0.map(|p| visibility * p + noise))
    }
}

impl TryFrom<[f64; 4]> for ProbabilityQuad {
    type Error = Error;

    fn try_from(p: [f64; 4]) -> Result<Self> {
        Self::from_array(p)
    }
}

impl From<ProbabilityQuad> for [f64; 4] {
    fn from(q: ProbabilityQuad) -> Self {
        q.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    /// Parallel-correlated maximally entangled state: `P++ = P-- = cos^2(a-b)/2`.
    MaxEntangled,
    /// `cos(theta)|HH> + sin(theta)|VV>`.
    NonMaxEntangled { theta: f64 },
    /// Deterministic hidden-variable model, see [`lhv_response`].
    Lhv,
}

/// A source model plus its white-noise visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    kind: StateKind,
    visibility: f64,
}

impl StateModel {
    pub fn new(kind: StateKind, visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidVisibility(visibility));
        }
        if let StateKind::NonMaxEntangled { theta } = kind {
            if !(theta > 0.0 && theta < FRAC_PI_2) {
                return Err(Error::InvalidTheta(theta));
            }
        }
        Ok(Self { kind, visibility })
    }

    pub fn max_entangled() -> Self {
        Self {
            kind: StateKind::MaxEntangled,
            visibility: 1.0,
        }
    }

    pub fn non_max_entangled(theta: f64) -> Result<Self> {
        Self::new(StateKind::NonMaxEntangled { theta }, 1.0)
    }

    pub fn lhv() -> Self {
        Self {
            kind: StateKind::Lhv,
            visibility: 1.0,
        }
    }

    pub fn with_visibility(self, visibility: f64) -> Result<Self> {
        Self::new(self.kind, visibility)
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn is_lhv(&self) -> bool {
        matches!(self.kind, StateKind::Lhv)
    }
}

/// Quantum prediction of the four joint probabilities.
///
/// Rejects the hidden-variable model, whose quad comes from
/// [`lhv_probabilities`] instead.
pub fn predict_probabilities(
    model: &StateModel,
    settings: &AnalyzerSettings,
) -> Result<ProbabilityQuad> {
    settings.check()?;
    let pure = match model.kind {
        StateKind::MaxEntangled => max_entangled_quad(settings),
        StateKind::NonMaxEntangled { theta } => non_max_entangled_quad(theta, settings),
        StateKind::Lhv => return Err(Error::LhvNotSupported),
    };
    Ok(pure.mix_with_uniform(model.visibility))
}

fn max_entangled_quad(s: &AnalyzerSettings) -> ProbabilityQuad {
    let d = s.alpha - s.beta;
    let same = 0.5 * d.cos().powi(2);
    let diff = 0.5 * d.sin().powi(2);
    ProbabilityQuad([same, diff, diff, same])
}

fn non_max_entangled_quad(theta: f64, s: &AnalyzerSettings) -> ProbabilityQuad {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = s.alpha.sin_cos();
    let (sb, cb) = s.beta.sin_cos();
    let a_pp = ct * ca * cb + st * sa * sb;
    let a_pm = -ct * ca * sb + st * sa * cb;
    let a_mp = -ct * sa * cb + st * ca * sb;
    let a_mm = ct * sa * sb + st * ca * cb;
    ProbabilityQuad([a_pp * a_pp, a_pm * a_pm, a_mp * a_mp, a_mm * a_mm])
}

/// A single detector outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    /// Index into a quad for the joint outcome `(self, other)`.
    pub fn joint_index(self, other: Outcome) -> usize {
        match (self, other) {
            (Outcome::Plus, Outcome::Plus) => PP,
            (Outcome::Plus, Outcome::Minus) => PM,
            (Outcome::Minus, Outcome::Plus) => MP,
            (Outcome::Minus, Outcome::Minus) => MM,
        }
    }
}

/// Deterministic hidden-variable response `sign(cos 2(angle - lambda))`.
///
/// A zero cosine maps to `Plus`.
pub fn lhv_response(lambda: f64, analyzer_angle: f64) -> Outcome {
    if (2.0 * (analyzer_angle - lambda)).cos() >= 0.0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// Closed-form correlation of the hidden-variable model: the sawtooth
/// `1 - 4d/pi` on `[0, pi/2]`, `4d/pi - 3` on `(pi/2, pi]`.
pub fn lhv_correlation(settings: &AnalyzerSettings) -> Result<f64> {
    settings.check()?;
    let delta = settings.folded_delta();
    Ok(if delta <= FRAC_PI_2 {
        1.0 - 4.0 * delta / PI
    } else {
        4.0 * delta / PI - 3.0
    })
}

/// Joint outcome probabilities of the hidden-variable model.
///
/// Both marginals are unbiased and the model is symmetric under flipping both
/// outcomes, so `P++ = P-- = (1 + E)/4` and `P+- = P-+ = (1 - E)/4`.
pub fn lhv_probabilities(settings: &AnalyzerSettings) -> Result<ProbabilityQuad> {
    let e = lhv_correlation(settings)?;
    let same = 0.25 * (1.0 + e);
    let diff = 0.25 * (1.0 - e);
    Ok(ProbabilityQuad([same, diff, diff, same]))
}

/// Expected quad for any model kind, visibility included.
pub fn model_quad(model: &StateModel, settings: &AnalyzerSettings) -> Result<ProbabilityQuad> {
    match model.kind {
        StateKind::Lhv => Ok(lhv_probabilities(settings)?.mix_with_uniform(model.visibility)),
        _ => predict_probabilities(model, settings),
    }
}

/// Model correlation `E(alpha, beta)` for any model kind.
pub fn model_correlation(model: &StateModel, settings: &AnalyzerSettings) -> Result<f64> {
    let q = model_quad(model, settings)?;
    Ok(crate::inequality::correlation(&q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, FRAC_PI_8};

    /// Brute-force contraction of the two-photon state vector
    /// `psi[i][j]` (basis H=0, V=1) with the analyzer eigenvectors.
    fn state_vector_quad(psi: [[f64; 2]; 2], alpha: f64, beta: f64) -> [f64; 4] {
        let eig = |g: f64, plus: bool| -> [f64; 2] {
            if plus {
                [g.cos(), g.sin()]
            } else {
                [-g.sin(), g.cos()]
            }
        };
        let mut out = [0.0; 4];
        for (k, (pa, pb)) in [(true, true), (true, false), (false, true), (false, false)]
            .into_iter()
            .enumerate()
        {
            let va = eig(alpha, pa);
            let vb = eig(beta, pb);
            let mut amp = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    amp += va[i] * vb[j] * psi[i][j];
                }
            }
            out[k] = amp * amp;
        }
        out
    }

    fn psi(theta: f64) -> [[f64; 2]; 2] {
        [[theta.cos(), 0.0], [0.0, theta.sin()]]
    }

    fn assert_quad(q: ProbabilityQuad, expected: [f64; 4], tol: f64) {
        for (a, b) in q.as_array().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = tol);
        }
    }

    #[test]
    fn max_entangled_examples() {
        let m = StateModel::max_entangled();
        let q = predict_probabilities(&m, &AnalyzerSettings::new(0.0, 0.0).unwrap()).unwrap();
        assert_quad(q, [0.5, 0.0, 0.0, 0.5], 1e-15);
        let q = predict_probabilities(&m, &AnalyzerSettings::new(0.0, FRAC_PI_4).unwrap()).unwrap();
        assert_quad(q, [0.25; 4], 1e-15);
        let q = predict_probabilities(&m, &AnalyzerSettings::new(0.0, FRAC_PI_6).unwrap()).unwrap();
        assert_quad(q, [0.375, 0.125, 0.125, 0.375], 1e-15);
        // Same point from the state vector of the theta = pi/4 state.
        assert_quad(q, state_vector_quad(psi(FRAC_PI_4), 0.0, FRAC_PI_6), 1e-15);
    }

    #[test]
    fn non_max_entangled_example() {
        let m = StateModel::non_max_entangled(0.6).unwrap();
        let q = predict_probabilities(&m, &AnalyzerSettings::new(0.0, 0.0).unwrap()).unwrap();
        assert_quad(q, [0.6811788772383368, 0.0, 0.0, 0.31882112276166324], 1e-15);
        assert_quad(q, state_vector_quad(psi(0.6), 0.0, 0.0), 1e-15);
    }

    #[test]
    fn zero_visibility_is_uniform() {
        let m = StateModel::max_entangled().with_visibility(0.0).unwrap();
        for (a, b) in [(0.0, 0.0), (0.3, -1.2), (2.0, 5.0)] {
            let q = predict_probabilities(&m, &AnalyzerSettings::new(a, b).unwrap()).unwrap();
            assert_quad(q, [0.25; 4], 1e-15);
        }
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            StateModel::new(StateKind::MaxEntangled, 1.5),
            Err(Error::InvalidVisibility(_))
        ));
        assert!(StateModel::new(StateKind::MaxEntangled, -0.1).is_err());
        assert!(StateModel::non_max_entangled(0.0).is_err());
        assert!(StateModel::non_max_entangled(FRAC_PI_2).is_err());
        assert!(AnalyzerSettings::new(f64::NAN, 0.0).is_err());
        assert!(AnalyzerSettings::new(0.0, f64::INFINITY).is_err());
        let bad = AnalyzerSettings {
            alpha: f64::NAN,
            beta: 0.0,
        };
        assert!(predict_probabilities(&StateModel::max_entangled(), &bad).is_err());
        assert!(lhv_correlation(&bad).is_err());
        let ok = AnalyzerSettings::new(0.0, 0.0).unwrap();
        assert!(matches!(
            predict_probabilities(&StateModel::lhv(), &ok),
            Err(Error::LhvNotSupported)
        ));
    }

    #[test]
    fn quad_validation() {
        assert!(ProbabilityQuad::new(0.5, 0.5, 0.0, 0.0).is_ok());
        assert!(ProbabilityQuad::new(0.5, 0.6, 0.0, -0.1).is_err());
        assert!(ProbabilityQuad::new(0.5, 0.4, 0.0, 0.0).is_err());
        assert!(ProbabilityQuad::new(f64::NAN, 0.4, 0.0, 0.0).is_err());
        let json = serde_json::to_string(&ProbabilityQuad::UNIFORM).unwrap();
        assert_eq!(json, "[0.25,0.25,0.25,0.25]");
        assert!(serde_json::from_str::<ProbabilityQuad>("[0.9,0.9,0,0]").is_err());
    }

    #[test]
    fn lhv_response_examples() {
        assert_eq!(lhv_response(0.0, 0.0), Outcome::Plus);
        assert_eq!(lhv_response(0.0, FRAC_PI_2), Outcome::Minus);
        assert_eq!(lhv_response(FRAC_PI_4, 0.0), Outcome::Plus);
    }

    /// Monte Carlo mean of the response products over uniform lambda.
    fn lhv_monte_carlo(alpha: f64, beta: f64, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        for _ in 0..samples {
            let lambda = rng.random::<f64>() * PI;
            sum += f64::from(lhv_response(lambda, alpha).sign() * lhv_response(lambda, beta).sign());
        }
        let mean = sum / samples as f64;
        (mean, ((1.0 - mean * mean) / samples as f64).sqrt())
    }

    #[test]
    fn lhv_correlation_examples() {
        let e = |d: f64| lhv_correlation(&AnalyzerSettings::new(0.0, d).unwrap()).unwrap();
        assert_eq!(e(0.0), 1.0);
        assert_abs_diff_eq!(e(FRAC_PI_8), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e(FRAC_PI_4), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e(FRAC_PI_2), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e(3.0 * FRAC_PI_4), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e(-FRAC_PI_8), 0.5, epsilon = 1e-15);

        let (mc, _) = lhv_monte_carlo(0.0, FRAC_PI_8, 1_000_000, 11);
        assert!((mc - 0.5).abs() < 3e-3, "{mc}");
        let (mc, _) = lhv_monte_carlo(0.0, FRAC_PI_4, 1_000_000, 12);
        assert!(mc.abs() < 3e-3, "{mc}");
    }

    #[test]
    fn lhv_sawtooth_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..6 {
            let alpha = rng.random::<f64>() * 2.0 * PI;
            let beta = rng.random::<f64>() * 2.0 * PI;
            let (mc, se) = lhv_monte_carlo(alpha, beta, 1_000_000, 100 + k);
            let exact = lhv_correlation(&AnalyzerSettings::new(alpha, beta).unwrap()).unwrap();
            assert!((mc - exact).abs() <= 3.0 * se.max(1e-6), "{alpha} {beta}: {mc} vs {exact}");
        }
    }

    #[test]
    fn lhv_quad_matches_sampled_joint_frequencies() {
        let s = AnalyzerSettings::new(0.2, 1.1).unwrap();
        let q = lhv_probabilities(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 400_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            let lambda = rng.random::<f64>() * PI;
            counts[lhv_response(lambda, s.alpha).joint_index(lhv_response(lambda, s.beta))] += 1;
        }
        for i in 0..4 {
            let f = f64::from(counts[i]) / n as f64;
            let se = (q.as_array()[i] * (1.0 - q.as_array()[i]) / n as f64).sqrt();
            assert!((f - q.as_array()[i]).abs() < 4.0 * se, "{i}: {f} vs {q:?}");
        }
    }

    fn arb_angle() -> impl Strategy<Value = f64> {
        -10.0..10.0f64
    }

    fn arb_model() -> impl Strategy<Value = StateModel> {
        prop_oneof![
            (0.0..=1.0f64).prop_map(|v| StateModel::new(StateKind::MaxEntangled, v).unwrap()),
            (1e-3..FRAC_PI_2 - 1e-3, 0.0..=1.0f64).prop_map(|(t, v)| {
                StateModel::new(StateKind::NonMaxEntangled { theta: t }, v).unwrap()
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn normalization_and_period(model in arb_model(), a in arb_angle(), b in arb_angle()) {
            let s = AnalyzerSettings::new(a, b).unwrap();
            let q = predict_probabilities(&model, &s).unwrap();
            let sum: f64 = q.as_array().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(q.as_array().iter().all(|p| *p >= 0.0));
            let qa = predict_probabilities(&model, &AnalyzerSettings::new(a + PI, b).unwrap()).unwrap();
            let qb = predict_probabilities(&model, &AnalyzerSettings::new(a, b + PI).unwrap()).unwrap();
            for i in 0..4 {
                prop_assert!((q.as_array()[i] - qa.as_array()[i]).abs() < 1e-12);
                prop_assert!((q.as_array()[i] - qb.as_array()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn non_max_reduces_to_max(a in arb_angle(), b in arb_angle()) {
            let s = AnalyzerSettings::new(a, b).unwrap();
            let q1 = predict_probabilities(&StateModel::max_entangled(), &s).unwrap();
            let q2 = predict_probabilities(&StateModel::non_max_entangled(FRAC_PI_4).unwrap(), &s).unwrap();
            for i in 0..4 {
                prop_assert!((q1.as_array()[i] - q2.as_array()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn marginals(theta in 1e-3..FRAC_PI_2 - 1e-3, a in arb_angle(), b in arb_angle()) {
            let s = AnalyzerSettings::new(a, b).unwrap();
            let q = predict_probabilities(&StateModel::max_entangled(), &s).unwrap();
            prop_assert!((q.p_pp() + q.p_pm() - 0.5).abs() < 1e-12);

            let q = predict_probabilities(&StateModel::non_max_entangled(theta).unwrap(), &s).unwrap();
            let expected = theta.cos().powi(2) * a.cos().powi(2) + theta.sin().powi(2) * a.sin().powi(2);
            prop_assert!((q.p_pp() + q.p_pm() - expected).abs() < 1e-12);
            let brute = state_vector_quad(psi(theta), a, b);
            prop_assert!((brute[0] + brute[1] - expected).abs() < 1e-12);
            for i in 0..4 {
                prop_assert!((q.as_array()[i] - brute[i]).abs() < 1e-12);
            }
        }
    }
}
