//! Minimum chi-square fits of the entangled-state family to count data.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict_probabilities, StateKind, StateModel};
use crate::simulator::CountsRecord;
use crate::special::chi_square_sf;
use crate::statistics::{neumaier_sum, pair_chi_square};

/// Objective value assigned to parameters that make an observed outcome
/// impossible.
pub const IMPOSSIBLE_PENALTY: f64 = 1e30;

/// Fits with a visibility below this are flagged as uninformative.
pub const UNINFORMATIVE_VISIBILITY: f64 = 0.05;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Bounded Nelder-Mead simplex search.
///
/// Trial points are clamped into `bounds`. The search stops with
/// `converged = true` once the spread of function values across the simplex
/// drops below `tol`, or with `converged = false` after `max_evals`
/// evaluations; the best vertex is returned either way. NaN objective values
/// rank as `+inf`.
pub fn nelder_mead<F>(mut objective: F, x0: &[f64], bounds: &[(f64, f64)], tol: f64, max_evals: usize) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let k = x0.len();
    if k == 0 {
        return Err(Error::InvalidOptimizerInput("empty starting point".into()));
    }
    if bounds.len() != k {
        return Err(Error::InvalidOptimizerInput(format!(
            "{} bounds for {k} coordinates",
            bounds.len()
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidOptimizerInput(format!("tol must be positive, got {tol}")));
    }
    for (i, (&x, &(lo, hi))) in x0.iter().zip(bounds).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidOptimizerInput(format!("bad bounds ({lo}, {hi}) for coordinate {i}")));
        }
        if !(lo..=hi).contains(&x) {
            return Err(Error::InvalidOptimizerInput(format!(
                "x0[{i}] = {x} outside ({lo}, {hi})"
            )));
        }
    }

    let clamp = |p: &mut [f64]| {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |p: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = objective(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..k {
        let (lo, hi) = bounds[i];
        let width = hi - lo;
        let mut step = if width.is_finite() && width > 0.0 {
            INITIAL_STEP * width
        } else {
            INITIAL_STEP * x0[i].abs().max(1.0)
        };
        if x0[i] + step > hi {
            step = -step;
        }
        let mut v = x0.to_vec();
        v[i] += step;
        clamp(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    let converged = loop {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if values[k] - values[0] < tol {
            break true;
        }
        if evaluations.get() >= max_evals {
            break false;
        }

        let centroid: Vec<f64> = (0..k)
            .map(|j| simplex[..k].iter().map(|p| p[j]).sum::<f64>() / k as f64)
            .collect();
        let toward = |from: &[f64], coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coef * (c - x))
                .collect();
            clamp(&mut p);
            p
        };

        let worst = simplex[k].clone();
        let reflected = toward(&worst, REFLECT);
        let f_reflected = eval(&reflected);

        if f_reflected < values[0] {
            let expanded = toward(&worst, EXPAND);
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                simplex[k] = expanded;
                values[k] = f_expanded;
            } else {
                simplex[k] = reflected;
                values[k] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[k - 1] {
            simplex[k] = reflected;
            values[k] = f_reflected;
            continue;
        }

        let (contracted, threshold) = if f_reflected < values[k] {
            (toward(&worst, -CONTRACT * REFLECT), f_reflected)
        } else {
            (toward(&worst, -CONTRACT), values[k])
        };
        let f_contracted = eval(&contracted);
        if f_contracted <= threshold {
            simplex[k] = contracted;
            values[k] = f_contracted;
            continue;
        }

        let best = simplex[0].clone();
        for i in 1..=k {
            let mut p: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + SHRINK * (x - b))
                .collect();
            clamp(&mut p);
            values[i] = eval(&p);
            simplex[i] = p;
        }
    };

    let best = (0..=k)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Ok(Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evaluations: evaluations.get(),
        converged,
    })
}

/// Values of the four family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParameters {
    pub theta: f64,
    pub visibility: f64,
    pub alpha_offset: f64,
    pub beta_offset: f64,
}

impl Default for FitParameters {
    /// The maximally entangled state with perfect visibility and calibration.
    fn default() -> Self {
        Self {
            theta: FRAC_PI_4,
            visibility: 1.0,
            alpha_offset: 0.0,
            beta_offset: 0.0,
        }
    }
}

impl FitParameters {
    fn as_array(&self) -> [f64; 4] {
        [self.theta, self.visibility, self.alpha_offset, self.beta_offset]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self {
            theta: v[0],
            visibility: v[1],
            alpha_offset: v[2],
            beta_offset: v[3],
        }
    }

    pub fn model(&self) -> Result<StateModel> {
        StateModel::new(StateKind::NonMaxEntangled { theta: self.theta }, self.visibility)
    }
}

pub const PARAMETER_NAMES: [&str; 4] = ["theta", "visibility", "alpha_offset", "beta_offset"];

const THETA_MARGIN: f64 = 1e-6;
const OFFSET_MARGIN: f64 = 1e-9;

/// Closed bounds used for each parameter, in [`PARAMETER_NAMES`] order.
pub const PARAMETER_BOUNDS: [(f64, f64); 4] = [
    (THETA_MARGIN, FRAC_PI_2 - THETA_MARGIN),
    (0.0, 1.0),
    (-FRAC_PI_4 + OFFSET_MARGIN, FRAC_PI_4 - OFFSET_MARGIN),
    (-FRAC_PI_4 + OFFSET_MARGIN, FRAC_PI_4 - OFFSET_MARGIN),
];

/// Which parameters are free; the rest stay at `fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitFamily {
    pub free: [bool; 4],
    pub fixed: FitParameters,
}

impl FitFamily {
    pub fn new() -> Self {
        Self {
            free: [false; 4],
            fixed: FitParameters::default(),
        }
    }

    pub fn free_theta(mut self) -> Self {
        self.free[0] = true;
        self
    }

    pub fn free_visibility(mut self) -> Self {
        self.free[1] = true;
        self
    }

    pub fn free_offsets(mut self) -> Self {
        self.free[2] = true;
        self.free[3] = true;
        self
    }

    pub fn full() -> Self {
        Self::new().free_theta().free_visibility().free_offsets()
    }

    pub fn with_fixed(mut self, fixed: FitParameters) -> Self {
        self.fixed = fixed;
        self
    }

    /// Parses a comma list of `theta`, `visibility`, `offsets`,
    /// `alpha_offset`, `beta_offset`.
    pub fn parse_free(list: &str) -> Result<Self> {
        let mut family = Self::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "theta" => family.free[0] = true,
                "visibility" => family.free[1] = true,
                "offsets" => {
                    family.free[2] = true;
                    family.free[3] = true;
                }
                "alpha_offset" => family.free[2] = true,
                "beta_offset" => family.free[3] = true,
                other => return Err(Error::InvalidFitFamily(format!("unknown parameter '{other}'"))),
            }
        }
        family.validate()?;
        Ok(family)
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        (0..4).filter(|&i| self.free[i]).map(|i| PARAMETER_NAMES[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.free_count() == 0 {
            return Err(Error::InvalidFitFamily("no free parameter".into()));
        }
        for (i, v) in self.fixed.as_array().into_iter().enumerate() {
            let (lo, hi) = PARAMETER_BOUNDS[i];
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidFitFamily(format!(
                    "fixed {} = {v} outside [{lo}, {hi}]",
                    PARAMETER_NAMES[i]
                )));
            }
        }
        Ok(())
    }

    fn expand(&self, free_values: &[f64]) -> FitParameters {
        let mut all = self.fixed.as_array();
        let mut it = free_values.iter();
        for (i, slot) in all.iter_mut().enumerate() {
            if self.free[i] {
                *slot = *it.next().expect("one value per free parameter");
            }
        }
        FitParameters::from_array(all)
    }

    fn free_bounds(&self) -> Vec<(f64, f64)> {
        (0..4).filter(|&i| self.free[i]).map(|i| PARAMETER_BOUNDS[i]).collect()
    }

    /// Center of the free box plus four corners of its middle half, so no
    /// start sits on a boundary where the objective can be flat.
    fn starting_points(&self) -> Vec<Vec<f64>> {
        let bounds = self.free_bounds();
        let at = |fractions: &dyn Fn(usize) -> f64| -> Vec<f64> {
            bounds
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| lo + fractions(i) * (hi - lo))
                .collect()
        };
        vec![
            at(&|_| 0.5),
            at(&|_| 0.25),
            at(&|_| 0.75),
            at(&|i| if i % 2 == 0 { 0.25 } else { 0.75 }),
            at(&|i| if i % 2 == 0 { 0.75 } else { 0.25 }),
        ]
    }
}

impl Default for FitFamily {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: FitParameters,
    pub free: Vec<String>,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Visibility so low that the data barely constrain the state.
    pub uninformative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_evals_per_start: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_evals_per_start: 4000,
        }
    }
}

/// Chi-square of the data against one member of the family.
pub fn family_chi_square(dataset: &[CountsRecord], parameters: &FitParameters) -> Result<f64> {
    let model = parameters.model()?;
    let terms = dataset
        .iter()
        .map(|record| {
            let settings = record
                .settings
                .shifted(parameters.alpha_offset, parameters.beta_offset)?;
            let quad = predict_probabilities(&model, &settings)?;
            pair_chi_square(record, &quad)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(neumaier_sum(terms))
}

fn objective(dataset: &[CountsRecord], parameters: &FitParameters) -> f64 {
    match family_chi_square(dataset, parameters) {
        Ok(v) => v,
        Err(_) => IMPOSSIBLE_PENALTY,
    }
}

pub fn fit_model(dataset: &[CountsRecord], family: &FitFamily) -> Result<FitResult> {
    fit_model_with(dataset, family, &FitOptions::default())
}

/// Minimizes the chi-square over the free parameters from five fixed starts,
/// restarting each search once from its end point, and keeps the best.
pub fn fit_model_with(dataset: &[CountsRecord], family: &FitFamily, options: &FitOptions) -> Result<FitResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    family.validate()?;
    let free = family.free_count();
    let pairs = dataset.len();
    if 3 * pairs <= free {
        return Err(Error::NoDegreesOfFreedom { pairs, free });
    }
    if let Some(r) = dataset.iter().find(|r| r.total() == 0) {
        return Err(Error::InvalidArgument(format!(
            "zero-total record at alpha={} deg, beta={} deg",
            r.settings.alpha_deg(),
            r.settings.beta_deg()
        )));
    }
    let bounds = family.free_bounds();
    let f = |x: &[f64]| objective(dataset, &family.expand(x));

    let mut best: Option<Minimum> = None;
    let mut evaluations = 0;
    for start in family.starting_points() {
        let first = nelder_mead(f, &start, &bounds, options.tol, options.max_evals_per_start)?;
        let second = nelder_mead(f, &first.x, &bounds, options.tol, options.max_evals_per_start)?;
        evaluations += first.evaluations + second.evaluations;
        let candidate = if second.f <= first.f { second } else { first };
        if best.as_ref().is_none_or(|b| candidate.f < b.f) {
            best = Some(candidate);
        }
    }
    let best = best.expect("at least one start");
    let parameters = family.expand(&best.x);
    let dof = 3 * pairs - free;
    Ok(FitResult {
        parameters,
        free: family.free_names().into_iter().map(String::from).collect(),
        chi2: best.f,
        dof,
        p_value: chi_square_sf(best.f, dof),
        converged: best.converged,
        evaluations,
        uninformative: parameters.visibility < UNINFORMATIVE_VISIBILITY,
    })
}
