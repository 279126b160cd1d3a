//! Shared fixtures for the benchmarks.

use dyniv::{build_ugrid, fit_censoring_km, gen_dataset, prepare, ModelFamily, SimDesign, UGrid, WeightFn, WeightedSample};

/// A censored Weibull sample of size `n` with its weights, and the default grid.
pub fn fixture(family: ModelFamily, n: usize) -> (SimDesign, WeightedSample, UGrid) {
    let design = SimDesign::standard(family, true, n);
    let sim = gen_dataset(&design, 42).expect("design is valid");
    let g = fit_censoring_km(&sim.dataset);
    let ws = prepare(&sim.dataset, &g).expect("weights exist");
    let grid = build_ugrid(100, 0.025, 0.975, WeightFn::Exponential).expect("grid is valid");
    (design, ws, grid)
}
