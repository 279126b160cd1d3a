//! Instrumental-variable estimation of the effect of a dynamic, possibly
//! censored treatment time on a right-censored duration.
//!
//! The estimator imposes the unconditional identification equation
//! `F₀(φ₀(u), w) + F₁(φ₁(·, u), w) = (1 - e^{-u}) F_W(w)` on a grid of `u`
//! values, with `F₀` and `F₁` estimated by inverse-probability-of-censoring
//! weighting, and minimizes the resulting squared distance over a parametric
//! family for `φ`.

pub mod data;
pub mod error;
pub mod inference;
pub mod km;
pub mod model;
pub mod moment;
pub mod normal;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod simulation;
pub mod solver;

pub use data::{validate, Dataset, Observation, Violation, ViolationKind};
pub use error::{Error, Result};
pub use inference::{
    bootstrap, curve_bands, hazard_curves, percentile_ci, Arm, BootstrapResult, HazardCurve,
};
pub use km::{fit_censoring_km, StepSurvival};
pub use model::{ModelFamily, ModelParams, Structural};
pub use moment::{fhat0, fhat1, mhat_row, objective, prepare, UGrid, WeightFn, WeightedSample};
pub use solver::{
    build_ugrid, estimate, feasibility_check, naive_fit, EstimationResult, SolverConfig,
};
pub use simulation::{gen_dataset, run_montecarlo, Censoring, MonteCarloReport, SimDesign};
