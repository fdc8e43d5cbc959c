//! Probability models, coincidence-count simulation and the linear-combination
//! test family for EPR-Bohm polarization experiments.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] closed-form quantum predictions and the deterministic
//!   hidden-variable model,
//! * [`inequality`] linear combinations `E_c`, the correlation, CHSH and the
//!   most-significant coefficient solver,
//! * [`simulator`] seeded Monte Carlo generation of coincidence counts with
//!   compensating anomalies,
//! * [`statistics`] multinomial error model, `z` tests, the compensation ratio
//!   and chi-square goodness of fit,
//! * [`fitting`] bounded Nelder-Mead and minimum chi-square model fits,
//! * [`io`] and [`analysis`] count files, JSON reports and curve files.
//!
//! Runnable walkthroughs of each capability live under `examples/`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fitting;
pub mod inequality;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod statistics;

pub use error::{Error, Result};
pub use inequality::{ChshAngles, CoefficientVector};
pub use model::{AnalyzerSettings, Outcome, ProbabilityQuad, StateKind, StateModel};
pub use simulator::{CountsRecord, ExperimentPlan, NoiseConfig};
pub use statistics::{EmpiricalQuad, TestResult};
