//! Linear combinations of the joint probabilities, the CHSH statistic and
//! the coefficient vector of maximal significance.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProbabilityQuad;

/// Coefficients `c = (c++, c+-, c-+, c--)` of a test `E_c = c . P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct CoefficientVector([f64; 4]);

impl CoefficientVector {
    /// `(1, -1, -1, 1)`: the correlation `E`.
    pub const CORRELATION: CoefficientVector = CoefficientVector([1.0, -1.0, -1.0, 1.0]);
    /// `(1, 1, 1, 1)`: normalization, identically 1.
    pub const NORMALIZATION: CoefficientVector = CoefficientVector([1.0, 1.0, 1.0, 1.0]);
    /// `(1, 0, 0, -1)`: imbalance between `++` and `--`.
    pub const SAME_IMBALANCE: CoefficientVector = CoefficientVector([1.0, 0.0, 0.0, -1.0]);
    /// `(0, 1, -1, 0)`: imbalance between `+-` and `-+`.
    pub const CROSS_IMBALANCE: CoefficientVector = CoefficientVector([0.0, 1.0, -1.0, 0.0]);
    /// `(1, 1, -1, -1)`: `2 P(A=+) - 1`.
    pub const MARGINAL_A: CoefficientVector = CoefficientVector([1.0, 1.0, -1.0, -1.0]);
    /// `(1, -1, 1, -1)`: `2 P(B=+) - 1`.
    pub const MARGINAL_B: CoefficientVector = CoefficientVector([1.0, -1.0, 1.0, -1.0]);

    pub fn new(c_pp: f64, c_pm: f64, c_mp: f64, c_mm: f64) -> Result<Self> {
        Self::from_array([c_pp, c_pm, c_mp, c_mm])
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCoefficients(format!("non-finite component in {c:?}")));
        }
        if c.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidCoefficients("all components are zero".into()));
        }
        Ok(Self(c))
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Unit length, first non-negligible component positive.
    pub fn canonical(&self) -> Self {
        Self(canonicalize(Vector4::from(self.0)))
    }
}

/// The default test family: correlation, normalization, the two
/// compensating-pair probes and both single-side marginal probes.
pub fn canonical_tests() -> Vec<CoefficientVector> {
    vec![
        CoefficientVector::CORRELATION,
        CoefficientVector::NORMALIZATION,
        CoefficientVector::SAME_IMBALANCE,
        CoefficientVector::CROSS_IMBALANCE,
        CoefficientVector::MARGINAL_A,
        CoefficientVector::MARGINAL_B,
    ]
}

impl TryFrom<[f64; 4]> for CoefficientVector {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Self::from_array(c)
    }
}

impl From<CoefficientVector> for [f64; 4] {
    fn from(c: CoefficientVector) -> Self {
        c.0
    }
}

/// `E = P++ - P+- - P-+ + P--`.
pub fn correlation(quad: &ProbabilityQuad) -> f64 {
    quad.p_pp() - quad.p_pm() - quad.p_mp() + quad.p_mm()
}

/// `E_c = c . P`.
///
/// The sum runs left to right, so `c = (1, -1, -1, 1)` reproduces
/// [`correlation`] bit for bit.
pub fn linear_combination(c: &CoefficientVector, quad: &ProbabilityQuad) -> f64 {
    dot(&c.0, &quad.as_array())
}

pub(crate) fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Two analyzer settings per side, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        if [a, a_prime, b, b_prime].iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite CHSH angle in ({a}, {a_prime}, {b}, {b_prime})"
            )));
        }
        Ok(Self {
            a,
            a_prime,
            b,
            b_prime,
        })
    }

    pub fn from_degrees(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        Self::new(
            a.to_radians(),
            a_prime.to_radians(),
            b.to_radians(),
            b_prime.to_radians(),
        )
    }

    /// `a = 0, a' = pi/4, b = pi/8, b' = 3pi/8`, where the cosine curve
    /// reaches `2 sqrt 2`.
    pub fn standard() -> Self {
        use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
        Self {
            a: 0.0,
            a_prime: FRAC_PI_4,
            b: FRAC_PI_8,
            b_prime: 3.0 * FRAC_PI_8,
        }
    }

    /// Setting pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    pub fn degrees(&self) -> [f64; 4] {
        [self.a, self.a_prime, self.b, self.b_prime].map(f64::to_degrees)
    }
}

pub const CHSH_CLASSICAL_BOUND: f64 = 2.0;
pub const TSIRELSON_BOUND: f64 = std::f64::consts::SQRT_2 * 2.0;

/// Signs applied to `E` at the pairs of [`ChshAngles::pairs`]. The minus sits
/// on `(a, b')`, the pair with the widest separation at the standard angles.
pub const CHSH_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

/// `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
pub fn chsh_statistic<F>(correlation: F, angles: &ChshAngles) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    angles
        .pairs()
        .iter()
        .zip(CHSH_SIGNS)
        .fold(0.0, |acc, (&(x, y), sign)| acc + sign * correlation(x, y))
}

/// Output of [`optimal_coefficients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTest {
    pub c: CoefficientVector,
    /// The deviation carried no weight on the covariance's row space.
    pub degenerate: bool,
}

/// Relative cutoff below which eigenvalues of the covariance count as zero.
pub const PINV_RCOND: f64 = 1e-12;

/// Significance `|c . delta| / sqrt(c' Sigma c)`, `None` when the variance
/// along `c` vanishes.
pub fn significance(c: &CoefficientVector, delta: &[f64; 4], covariance: &Matrix4<f64>) -> Option<f64> {
    let cv = Vector4::from(c.0);
    let var = (cv.transpose() * covariance * cv)[(0, 0)];
    let scale = covariance.amax() * cv.norm_squared();
    if var <= PINV_RCOND * scale || var <= 0.0 {
        return None;
    }
    Some(dot(&c.0, delta).abs() / var.sqrt())
}

/// Coefficients maximizing [`significance`] for a deviation `delta` under
/// `covariance`: `pinv(Sigma) delta`, scaled to unit length.
///
/// When `delta` is zero the correlation direction is returned; when it has
/// no component in the row space of `Sigma` its own direction is returned.
/// Both cases are flagged degenerate.
pub fn optimal_coefficients(delta: &[f64; 4], covariance: &Matrix4<f64>) -> Result<OptimalTest> {
    if delta.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite deviation {delta:?}")));
    }
    check_covariance(covariance)?;

    let d = Vector4::from(*delta);
    let fallback = |v: Vector4<f64>| OptimalTest {
        c: CoefficientVector(canonicalize(v)),
        degenerate: true,
    };
    if d.norm() == 0.0 {
        return Ok(fallback(Vector4::from(CoefficientVector::CORRELATION.0)));
    }

    let eig = SymmetricEigen::new(*covariance);
    let largest = eig.eigenvalues.amax();
    let mut c = Vector4::zeros();
    let mut row_space_part = Vector4::zeros();
    if largest > 0.0 {
        for k in 0..4 {
            let lambda = eig.eigenvalues[k];
            if lambda > PINV_RCOND * largest {
                let v = eig.eigenvectors.column(k);
                let w = v.dot(&d);
                c += v * (w / lambda);
                row_space_part += v * w;
            }
        }
    }
    if row_space_part.norm() <= PINV_RCOND * d.norm() || c.norm() == 0.0 {
        return Ok(fallback(d));
    }
    Ok(OptimalTest {
        c: CoefficientVector(canonicalize(c)),
        degenerate: false,
    })
}

fn check_covariance(m: &Matrix4<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidCovariance(format!("not symmetric (max asymmetry {asym:e})")));
    }
    let eig = SymmetricEigen::new(*m);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::InvalidCovariance(format!("indefinite (eigenvalue {min:e})")));
    }
    Ok(())
}

fn canonicalize(v: Vector4<f64>) -> [f64; 4] {
    let mut u = v / v.norm();
    let lead = u.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
    if lead < 0.0 {
        u = -u;
    }
    [u[0], u[1], u[2], u[3]]
}
