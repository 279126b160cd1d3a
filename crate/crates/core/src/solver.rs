//! Grid construction, naive starting values, the post-fit feasibility screen
//! and multi-start Nelder-Mead minimization of `L̂(θ)`.
//!
//! The optimizer works on a transformed scale: positivity-constrained
//! coordinates are log-transformed, the log-normal locations are left as is,
//! and every coordinate is clamped into `[-box_bound, box_bound]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::km::fit_censoring_km;
use crate::model::{ModelFamily, ModelParams, Structural};
use crate::moment::{objective_with, prepare, ObjectiveScratch, UGrid, WeightFn, WeightedSample};
use crate::normal;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rng::{self, Purpose};

/// Added to `L̂` once per violated upper-support condition.
pub const INFEASIBILITY_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_starts: usize,
    pub grid_m: usize,
    pub q_low: f64,
    pub q_high: f64,
    pub max_iters: usize,
    pub xtol: f64,
    pub ftol: f64,
    /// SD of the Gaussian start perturbation on the transformed scale.
    pub start_scale: f64,
    pub initial_step: f64,
    pub restarts: usize,
    pub box_bound: f64,
    pub weight: WeightFn,
    pub seed: u64,
    /// Upper bound of the censoring support; `null` means unbounded.
    pub c0: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_starts: 100,
            grid_m: 100,
            q_low: 0.025,
            q_high: 0.975,
            max_iters: 2000,
            xtol: 1e-8,
            ftol: 1e-12,
            start_scale: 0.5,
            initial_step: 0.1,
            restarts: 2,
            box_bound: 10.0,
            weight: WeightFn::Exponential,
            seed: 0,
            c0: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_starts == 0 {
            return bad("n_starts must be positive");
        }
        if self.grid_m == 0 {
            return bad("grid_m must be positive");
        }
        let equal_ok = self.grid_m == 1 && self.q_low == self.q_high;
        if !(self.q_low > 0.0 && self.q_high < 1.0 && (self.q_low < self.q_high || equal_ok)) {
            return bad("need 0 < q_low < q_high < 1");
        }
        if !(self.xtol >= 0.0 && self.ftol >= 0.0 && self.start_scale >= 0.0) {
            return bad("tolerances and start_scale must be >= 0");
        }
        if !(self.initial_step > 0.0 && self.box_bound > 0.0) {
            return bad("initial_step and box_bound must be positive");
        }
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0) {
                return bad("c0 must be positive");
            }
        }
        Ok(())
    }

    pub fn c0(&self) -> f64 {
        self.c0.unwrap_or(f64::INFINITY)
    }

    /// Parses a JSON document; unknown or mistyped keys are reported with
    /// their path. Missing keys take their defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_grid(&self) -> Result<UGrid> {
        build_ugrid(self.grid_m, self.q_low, self.q_high, self.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartMinimum {
    pub theta: ModelParams,
    /// Penalized objective at the local minimum.
    pub value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub family: ModelFamily,
    pub theta_hat: ModelParams,
    /// `L̂(θ̂)` without any feasibility penalty.
    pub objective_value: f64,
    pub n_starts_converged: usize,
    pub per_start_minima: Vec<StartMinimum>,
    pub feasibility_flag: bool,
    pub warnings: Vec<String>,
}

/// `m` equally spaced points between the unit-exponential quantiles at
/// `q_low` and `q_high`, weighted by `weight`.
pub fn build_ugrid(m: usize, q_low: f64, q_high: f64, weight: WeightFn) -> Result<UGrid> {
    if m == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let valid = q_low > 0.0 && q_high < 1.0 && (q_low < q_high || (m == 1 && q_low == q_high));
    if !valid {
        return Err(Error::InvalidArgument(format!(
            "invalid grid quantiles ({q_low}, {q_high})"
        )));
    }
    let lo = -(-q_low).ln_1p();
    let hi = -(-q_high).ln_1p();
    let points = if m == 1 {
        vec![lo]
    } else {
        (0..m)
            .map(|j| {
                if j == m - 1 {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / (m - 1) as f64
                }
            })
            .collect()
    };
    UGrid::with_weight_fn(points, weight)
}

/// Transformed (unconstrained) coordinates of `theta`.
pub fn to_unconstrained(family: ModelFamily, theta: &ModelParams) -> [f64; 4] {
    let a = theta.to_array();
    match family {
        ModelFamily::Weibull => a.map(f64::ln),
        ModelFamily::LogNormal => [a[0], a[1], a[2].ln(), a[3].ln()],
    }
}

pub fn from_unconstrained(family: ModelFamily, x: &[f64]) -> ModelParams {
    match family {
        ModelFamily::Weibull => ModelParams::new(x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp()),
        ModelFamily::LogNormal => ModelParams::new(x[0], x[1], x[2].exp(), x[3].exp()),
    }
}

/// Censored maximum-likelihood fit of a single, treatment-free distribution
/// to `(Y, δ)`, duplicated into the pre- and post-treatment slots.
pub fn naive_fit(dataset: &Dataset, family: ModelFamily) -> Result<ModelParams> {
    let obs = dataset.observations();
    let events = obs.iter().filter(|o| o.delta).count();
    if events < 2 {
        return Err(Error::InvalidData(format!(
            "naive fit needs at least two uncensored observations, found {events}"
        )));
    }
    if obs.iter().any(|o| o.delta && o.y <= 0.0) {
        return Err(Error::InvalidData(
            "naive fit needs positive uncensored durations".into(),
        ));
    }
    match family {
        ModelFamily::Weibull => weibull_mle(dataset),
        ModelFamily::LogNormal => lognormal_mle(dataset),
    }
}

fn weibull_mle(dataset: &Dataset) -> Result<ModelParams> {
    let obs = dataset.observations();
    let pos: Vec<(f64, bool)> = obs
        .iter()
        .filter(|o| o.y > 0.0)
        .map(|o| (o.y.ln(), o.delta))
        .collect();
    let events = pos.iter().filter(|p| p.1).count() as f64;
    let sum_ln_event: f64 = pos.iter().filter(|p| p.1).map(|p| p.0).sum();
    let ln_max = pos.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);

    // Profile score in the shape k; strictly decreasing.
    let sums = |k: f64| -> (f64, f64) {
        pos.iter().fold((0.0, 0.0), |(s, t), &(ly, _)| {
            let r = (k * (ly - ln_max)).exp();
            (s + r, t + r * ly)
        })
    };
    let score = |k: f64| {
        let (s, t) = sums(k);
        events / k + sum_ln_event - events * t / s
    };

    let (mut lo, mut hi) = (1e-4f64.ln(), 1e4f64.ln());
    if score(hi.exp()) > 0.0 || score(lo.exp()) < 0.0 {
        return Err(Error::InvalidData(
            "Weibull likelihood has no interior maximum (degenerate durations)".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let k = (0.5 * (lo + hi)).exp();
    let (s, _) = sums(k);
    let rate = (events.ln() - k * ln_max - s.ln()).exp();
    Ok(ModelParams::new(rate, rate, k, k))
}

fn lognormal_mle(dataset: &Dataset) -> Result<ModelParams> {
    let obs = dataset.observations();
    let logs: Vec<f64> = obs.iter().filter(|o| o.delta).map(|o| o.y.ln()).collect();
    let n_ev = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n_ev;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n_ev;
    if obs.iter().all(|o| o.delta) {
        if !(var > 0.0) {
            return Err(Error::InvalidData("durations have zero spread".into()));
        }
        return Ok(ModelParams::new(mean, mean, var.sqrt(), var.sqrt()));
    }

    let data: Vec<(f64, bool)> = obs.iter().map(|o| (o.y.ln(), o.delta)).collect();
    let nll = |x: &[f64]| -> f64 {
        let (mu, ln_sigma) = (x[0], x[1]);
        let sigma = ln_sigma.exp();
        data.iter()
            .map(|&(ly, event)| {
                let z = (ly - mu) / sigma;
                if event {
                    0.5 * z * z + ln_sigma
                } else {
                    -normal::ln_sf(z)
                }
            })
            .sum()
    };
    let start_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let opts = NelderMeadOptions {
        max_iters: 5000,
        xtol: 1e-10,
        ftol: 1e-12,
        initial_step: 0.2,
        restarts: 3,
        lower: -50.0,
        upper: 50.0,
    };
    let r = nelder_mead(nll, &[mean, start_sd.ln()], &opts);
    if !r.fx.is_finite() {
        return Err(Error::Numerical("log-normal likelihood did not converge".into()));
    }
    let sigma = r.x[1].exp();
    Ok(ModelParams::new(r.x[0], r.x[0], sigma, sigma))
}

/// Number of upper-support violations at the last grid point:
/// `φ_θ0(u_m) >= c0` counts once, and each treated row with
/// `φ_θ1(Z̃_i, u_m) >= c0` counts once.
pub fn feasibility_violations(model: &Structural, u_max: f64, dataset: &Dataset, c0: f64) -> usize {
    if c0 == f64::INFINITY {
        return 0;
    }
    let mut count = 0;
    match model.phi0(u_max) {
        Ok(v) if v < c0 => {}
        _ => count += 1,
    }
    for o in dataset.observations().iter().filter(|o| o.dtilde) {
        match model.phi1(o.ztilde, u_max) {
            Ok(v) if v >= c0 || v.is_nan() => count += 1,
            // below the treated branch: no finite quantile to exceed c0
            _ => {}
        }
    }
    count
}

pub fn feasibility_check(
    family: ModelFamily,
    theta: &ModelParams,
    grid: &UGrid,
    dataset: &Dataset,
    c0: f64,
) -> bool {
    match Structural::new(family, *theta) {
        Ok(model) => feasibility_violations(&model, grid.last(), dataset, c0) == 0,
        Err(_) => false,
    }
}

/// Minimizes `L̂` from `n_starts` starts around the naive fit.
///
/// Start 0 is the naive fit itself; the others add independent
/// `N(0, start_scale²)` draws to each transformed coordinate.
pub fn estimate(dataset: &Dataset, family: ModelFamily, config: &SolverConfig) -> Result<EstimationResult> {
    config.validate()?;
    let center = naive_fit(dataset, family)?;
    let starts = perturbed_starts(family, &center, config);
    estimate_from_starts(dataset, family, config, &starts)
}

pub fn perturbed_starts(family: ModelFamily, center: &ModelParams, config: &SolverConfig) -> Vec<ModelParams> {
    let base = to_unconstrained(family, center);
    let b = config.box_bound;
    (0..config.n_starts)
        .map(|s| {
            if s == 0 {
                return *center;
            }
            let mut rng = rng::stream(config.seed, Purpose::Starts, s as u64);
            let x = base.map(|v| (v + config.start_scale * rng::standard_normal(&mut rng)).clamp(-b, b));
            from_unconstrained(family, &x)
        })
        .collect()
}

/// Runs one local search per start and keeps the best. Ties are broken by
/// lexicographic `θ`, so the answer does not depend on scheduling.
pub fn estimate_from_starts(
    dataset: &Dataset,
    family: ModelFamily,
    config: &SolverConfig,
    starts: &[ModelParams],
) -> Result<EstimationResult> {
    config.validate()?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    let g = fit_censoring_km(dataset);
    let ws = prepare(dataset, &g)?;
    let grid = config.build_grid()?;
    let problem = Problem {
        dataset,
        ws: &ws,
        grid: &grid,
        family,
        config,
    };

    let minima: Vec<StartMinimum> = starts
        .par_iter()
        .map_init(ObjectiveScratch::default, |scratch, start| problem.local_search(start, scratch))
        .collect();

    let best = minima
        .iter()
        .filter(|m| m.value.is_finite())
        .min_by(|a, b| {
            a.value.total_cmp(&b.value).then_with(|| {
                let (x, y) = (a.theta.to_array(), b.theta.to_array());
                x.iter()
                    .zip(&y)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .ok_or_else(|| Error::Numerical("no start reached a finite objective value".into()))?;

    let theta_hat = best.theta;
    let model = Structural::new(family, theta_hat)?;
    let objective_value = objective_with(&ws, &model, &grid, &mut ObjectiveScratch::default());
    let feasibility_flag = feasibility_violations(&model, grid.last(), dataset, config.c0()) == 0;

    let mut warnings = Vec::new();
    let treated = dataset.observations().iter().filter(|o| o.dtilde).count();
    if treated == 0 {
        warnings.push("no treated observations; post-treatment parameters are not identified".into());
    } else if treated == dataset.len() {
        warnings.push("no untreated observations".into());
    }
    if !feasibility_flag {
        warnings.push(format!(
            "estimate fails the upper-support check: a quantile at u = {} reaches c0 = {}",
            grid.last(),
            config.c0()
        ));
    }

    Ok(EstimationResult {
        family,
        theta_hat,
        objective_value,
        n_starts_converged: minima.iter().filter(|m| m.converged).count(),
        per_start_minima: minima,
        feasibility_flag,
        warnings,
    })
}

struct Problem<'a> {
    dataset: &'a Dataset,
    ws: &'a WeightedSample,
    grid: &'a UGrid,
    family: ModelFamily,
    config: &'a SolverConfig,
}

impl Problem<'_> {
    fn value(&self, x: &[f64], scratch: &mut ObjectiveScratch) -> f64 {
        let theta = from_unconstrained(self.family, x);
        let Ok(model) = Structural::new(self.family, theta) else {
            return f64::INFINITY;
        };
        let base = objective_with(self.ws, &model, self.grid, scratch);
        let c0 = self.config.c0();
        if c0.is_finite() {
            let v = feasibility_violations(&model, self.grid.last(), self.dataset, c0);
            base + INFEASIBILITY_PENALTY * v as f64
        } else {
            base
        }
    }

    fn local_search(&self, start: &ModelParams, scratch: &mut ObjectiveScratch) -> StartMinimum {
        let b = self.config.box_bound;
        let x0 = to_unconstrained(self.family, start).map(|v| v.clamp(-b, b));
        let opts = NelderMeadOptions {
            max_iters: self.config.max_iters,
            xtol: self.config.xtol,
            ftol: self.config.ftol,
            initial_step: self.config.initial_step,
            restarts: self.config.restarts,
            lower: -b,
            upper: b,
        };
        let r = nelder_mead(|x| self.value(x, scratch), &x0, &opts);
        StartMinimum {
            theta: from_unconstrained(self.family, &r.x),
            value: r.fx,
            converged: r.converged,
        }
    }
}
