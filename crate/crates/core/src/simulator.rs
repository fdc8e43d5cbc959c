//! Synthetic coincidence counts.
//!
//! A plan lists setting pairs, a source model and imperfections. For each
//! pair the analyzers are rotated by the calibration offsets, the model quad
//! is computed, white noise and the compensating anomaly are applied and the
//! counts are drawn shot by shot from a stream keyed by `(seed, pair index)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    lhv_response, predict_probabilities, AnalyzerSettings, ProbabilityQuad, StateModel, MM, MP,
    PM, PP,
};
use crate::rng::Stream;

/// Imperfections applied on top of the source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Extra white-noise visibility, multiplied into the model's own.
    pub visibility: f64,
    /// Systematic analyzer rotation on side A, radians.
    pub alpha_offset: f64,
    /// Systematic analyzer rotation on side B, radians.
    pub beta_offset: f64,
    /// Probability moved from `--` to `++`.
    pub anomaly_eps1: f64,
    /// Probability moved from `-+` to `+-`.
    pub anomaly_eps2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            visibility: 1.0,
            alpha_offset: 0.0,
            beta_offset: 0.0,
            anomaly_eps1: 0.0,
            anomaly_eps2: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidVisibility(self.visibility));
        }
        let others = [
            self.alpha_offset,
            self.beta_offset,
            self.anomaly_eps1,
            self.anomaly_eps2,
        ];
        if others.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPlan(format!("non-finite noise parameter in {self:?}")));
        }
        Ok(())
    }

    pub fn has_anomaly(&self) -> bool {
        self.anomaly_eps1 != 0.0 || self.anomaly_eps2 != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub setting_pairs: Vec<AnalyzerSettings>,
    pub shots_per_pair: u64,
    pub model: StateModel,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.setting_pairs.is_empty() {
            return Err(Error::InvalidPlan("no setting pairs".into()));
        }
        if self.shots_per_pair == 0 {
            return Err(Error::InvalidPlan("shots_per_pair must be at least 1".into()));
        }
        for s in &self.setting_pairs {
            AnalyzerSettings::new(s.alpha, s.beta)?;
        }
        StateModel::new(self.model.kind(), self.model.visibility())?;
        self.noise.validate()
    }
}

/// Coincidence counts at one setting pair, in quad order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    pub settings: AnalyzerSettings,
    pub counts: [u64; 4],
}

impl CountsRecord {
    pub fn new(settings: AnalyzerSettings, n_pp: u64, n_pm: u64, n_mp: u64, n_mm: u64) -> Self {
        Self {
            settings,
            counts: [n_pp, n_pm, n_mp, n_mm],
        }
    }

    pub fn n_pp(&self) -> u64 {
        self.counts[PP]
    }

    pub fn n_pm(&self) -> u64 {
        self.counts[PM]
    }

    pub fn n_mp(&self) -> u64 {
        self.counts[MP]
    }

    pub fn n_mm(&self) -> u64 {
        self.counts[MM]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Result of [`apply_anomaly`]: the shifted quad and the transfers that were
/// actually applied after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyApplication {
    pub quad: ProbabilityQuad,
    pub applied_eps1: f64,
    pub applied_eps2: f64,
}

impl AnomalyApplication {
    pub fn clamped(&self, eps1: f64, eps2: f64) -> bool {
        self.applied_eps1 != eps1 || self.applied_eps2 != eps2
    }
}

/// Moves `eps1` from `--` to `++` and `eps2` from `-+` to `+-`.
///
/// Both transfers cancel in the correlation and in the normalization. They
/// are clamped so that no component leaves `[0, 1]`: `eps1` to
/// `[-p++, p--]` and `eps2` to `[-p+-, p-+]`.
pub fn apply_anomaly(quad: &ProbabilityQuad, eps1: f64, eps2: f64) -> AnomalyApplication {
    let [pp, pm, mp, mm] = quad.as_array();
    let e1 = eps1.clamp(-pp, mm);
    let e2 = eps2.clamp(-pm, mp);
    AnomalyApplication {
        quad: ProbabilityQuad::from_array_unchecked([pp + e1, pm + e2, mp - e2, mm - e1]),
        applied_eps1: e1,
        applied_eps2: e2,
    }
}

/// Multinomial draw of `shots` trials, one uniform per shot.
pub fn sample_counts(quad: &ProbabilityQuad, shots: u64, stream: &mut Stream) -> [u64; 4] {
    let p = quad.as_array();
    let cumulative = [p[0], p[0] + p[1], p[0] + p[1] + p[2]];
    // Rounding can leave the total short of 1; overflow goes to the last
    // outcome with positive probability.
    let last = (0..4).rev().find(|&i| p[i] > 0.0).unwrap_or(3);
    let mut counts = [0u64; 4];
    for _ in 0..shots {
        let u = stream.uniform();
        let k = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(3)
            .min(last);
        counts[k] += 1;
    }
    counts
}

/// Per-pair outcome of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedPair {
    pub record: CountsRecord,
    /// Quad the counts were drawn from; `None` for the hidden-variable path,
    /// which samples lambda shot by shot.
    pub sampled_quad: Option<ProbabilityQuad>,
    pub applied_eps1: f64,
    pub applied_eps2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub pairs: Vec<SimulatedPair>,
}

impl Simulation {
    pub fn records(&self) -> Vec<CountsRecord> {
        self.pairs.iter().map(|p| p.record).collect()
    }
}

/// Counts for every setting pair of the plan.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<CountsRecord>> {
    Ok(simulate(plan)?.records())
}

/// Like [`run_experiment`], also reporting the anomaly transfers applied at
/// each pair.
pub fn simulate(plan: &ExperimentPlan) -> Result<Simulation> {
    plan.validate()?;
    let pairs = plan
        .setting_pairs
        .par_iter()
        .enumerate()
        .map(|(index, settings)| simulate_pair(plan, index as u64, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation { pairs })
}

fn simulate_pair(plan: &ExperimentPlan, index: u64, nominal: &AnalyzerSettings) -> Result<SimulatedPair> {
    let noise = &plan.noise;
    let actual = nominal.shifted(noise.alpha_offset, noise.beta_offset)?;
    let visibility = plan.model.visibility() * noise.visibility;
    let mut stream = Stream::new(plan.seed, index);

    if plan.model.is_lhv() {
        let counts = sample_lhv_counts(&actual, visibility, plan.shots_per_pair, &mut stream);
        return Ok(SimulatedPair {
            record: CountsRecord {
                settings: *nominal,
                counts,
            },
            sampled_quad: None,
            applied_eps1: 0.0,
            applied_eps2: 0.0,
        });
    }

    let model = plan.model.with_visibility(visibility)?;
    let quad = predict_probabilities(&model, &actual)?;
    let shifted = apply_anomaly(&quad, noise.anomaly_eps1, noise.anomaly_eps2);
    let counts = sample_counts(&shifted.quad, plan.shots_per_pair, &mut stream);
    Ok(SimulatedPair {
        record: CountsRecord {
            settings: *nominal,
            counts,
        },
        sampled_quad: Some(shifted.quad),
        applied_eps1: shifted.applied_eps1,
        applied_eps2: shifted.applied_eps2,
    })
}

/// Shot-by-shot hidden-variable sampling: one shared lambda per shot. With
/// `visibility < 1` a shot is replaced by a uniformly random outcome pair
/// with probability `1 - visibility`.
fn sample_lhv_counts(settings: &AnalyzerSettings, visibility: f64, shots: u64, stream: &mut Stream) -> [u64; 4] {
    let noisy = visibility < 1.0;
    let mut counts = [0u64; 4];
    for _ in 0..shots {
        let lambda = stream.uniform() * PI;
        let k = if noisy {
            let mix = stream.uniform();
            let pick = stream.uniform();
            if mix < 1.0 - visibility {
                ((pick * 4.0) as usize).min(3)
            } else {
                lhv_response(lambda, settings.alpha).joint_index(lhv_response(lambda, settings.beta))
            }
        } else {
            lhv_response(lambda, settings.alpha).joint_index(lhv_response(lambda, settings.beta))
        };
        counts[k] += 1;
    }
    counts
}
