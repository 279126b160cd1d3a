//! Brute-force verifiers that share no code path with the moment engine.
//!
//! Everything here evaluates the structural maps `φ₀`, `φ₁` directly and
//! counts indicators row by row. Tolerances are three times a standard error
//! estimated from the same draws.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::km::{fit_censoring_km, StepSurvival};
use crate::model::{ModelFamily, ModelParams, Structural};
use crate::moment::{UGrid, WEIGHT_FLOOR};
use crate::simulation::{gen_dataset, gen_latent, Censoring, SimDesign};

/// Fewest latent rows the large-sample checks accept.
pub const MIN_N_LARGE: usize = 10_000;

/// Sup deviation over a probe grid together with its counting bound.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub max_deviation: f64,
    /// Three times the largest per-probe standard error.
    pub bound: f64,
    /// Probe `(first, second)` coordinates where the deviation peaks.
    pub argmax: (f64, f64),
    pub n: usize,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_deviation < self.bound
    }
}

/// `-ln(1 - q)` for each `q`: quantiles of the unit exponential.
pub fn exponential_quantiles(qs: &[f64]) -> Vec<f64> {
    qs.iter().map(|&q| -(-q).ln_1p()).collect()
}

/// `1{t <= φ_θ(z, u)}`; `false` where `φ₁(z, u)` does not exist.
fn below_phi(model: &Structural, phi0: f64, z: f64, t: f64, u: f64) -> bool {
    if z > phi0 {
        t <= phi0
    } else {
        model.phi1(z, u).is_ok_and(|p| t <= p)
    }
}

/// Both sides of the identification equation on uncensored latent draws
/// from `design`, with `φ` taken at `theta`, over the grid `u_j` and the
/// instrument quantiles `w_probe`.
///
/// LHS counts `1{T_i <= φ_θ(Z_i, u)} 1{W_i <= w}` and RHS is
/// `(1 - e^{-u}) F̂_W(w)`, both on the same draws. The bound uses the
/// per-row differences, so it estimates the standard error of LHS - RHS.
pub fn check_identification(
    design: &SimDesign,
    theta: &ModelParams,
    grid: &UGrid,
    w_probe: &[f64],
    n_large: usize,
    seed: u64,
) -> Result<OracleCheck> {
    if n_large < MIN_N_LARGE {
        return Err(Error::InvalidArgument(format!(
            "identification check needs n >= {MIN_N_LARGE}, got {n_large}"
        )));
    }
    if w_probe.is_empty() || w_probe.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::InvalidArgument("w quantiles must lie in (0, 1)".into()));
    }
    let latent = gen_latent(&SimDesign { n: n_large, ..design.clone() }, seed)?;
    let model = Structural::new(design.family, *theta)?;
    let us = grid.points();
    let m = us.len();
    let phi0: Vec<f64> = us.iter().map(|&u| model.phi0(u)).collect::<Result<_>>()?;
    let ws = exponential_quantiles(w_probe);
    let nw = ws.len();

    // `φ_θ(z, ·)` is increasing, so each row's indicator switches on at one
    // grid index; find it by bisection on direct evaluations.
    let first_on = |z: f64, t: f64| -> usize {
        let (mut lo, mut hi) = (0, m);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if below_phi(&model, phi0[mid], z, t, us[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };

    // on[j][q]: rows with indicator on at u_j and W <= w_q; inw[q]: W <= w_q.
    let zero = || (vec![0u64; (m + 1) * nw], vec![0u64; nw]);
    let (on_start, inw) = latent
        .par_chunks(1 << 14)
        .fold(zero, |(mut on, mut inw), chunk| {
            for l in chunk {
                let q0 = ws.partition_point(|&w| w < l.w);
                if q0 == nw {
                    continue;
                }
                let j = first_on(l.z, l.t);
                on[j * nw + q0] += 1;
                inw[q0] += 1;
            }
            (on, inw)
        })
        .reduce(zero, |(mut a, mut b), (c, d)| {
            a.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
            b.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
            (a, b)
        });

    // Cumulate over j (indicator stays on) and over q (W <= w is nested).
    let mut on = vec![0u64; m * nw];
    let mut run = vec![0u64; nw];
    for j in 0..m {
        for q in 0..nw {
            run[q] += on_start[j * nw + q];
        }
        let mut acc = 0;
        for q in 0..nw {
            acc += run[q];
            on[j * nw + q] = acc;
        }
    }
    let mut fw = vec![0u64; nw];
    let mut acc = 0;
    for q in 0..nw {
        acc += inw[q];
        fw[q] = acc;
    }

    let n = n_large as f64;
    let mut best = (0.0, (0.0, 0.0));
    let mut max_se: f64 = 0.0;
    for j in 0..m {
        let c = -(-us[j]).exp_m1();
        for q in 0..nw {
            let p_on = on[j * nw + q] as f64 / n;
            let p_w = fw[q] as f64 / n;
            let mean = p_on - c * p_w;
            // d_i = (I_i - c) 1{W_i <= w}, so E d² = (1 - 2c) P(I, W) + c² P(W).
            let second = (1.0 - 2.0 * c) * p_on + c * c * p_w;
            let var = (second - mean * mean).max(0.0) * n / (n - 1.0);
            max_se = max_se.max((var / n).sqrt());
            if mean.abs() > best.0 {
                best = (mean.abs(), (us[j], ws[q]));
            }
        }
    }
    Ok(OracleCheck {
        max_deviation: best.0,
        bound: 3.0 * max_se,
        argmax: best.1,
        n: n_large,
    })
}

/// `θ` moved away from the truth: the pre-treatment scale `θ₀₀` is scaled by
/// 1.5, or shifted by 0.5 when it is zero (log-normal location).
pub fn perturbed(theta: &ModelParams) -> ModelParams {
    let mut p = *theta;
    p.theta00 = if p.theta00 == 0.0 { 0.5 } else { 1.5 * p.theta00 };
    p
}

fn inverse_weight(g: &StepSurvival, index: usize, y: f64, delta: bool) -> Result<f64> {
    if !delta {
        return Ok(0.0);
    }
    let survival = g.eval(y);
    if !(survival >= WEIGHT_FLOOR) {
        return Err(Error::ZeroWeight { index, y, survival });
    }
    Ok(1.0 / survival)
}

/// `M̂_θ(u, w)` straight from the definitional sums.
pub fn naive_moment(
    dataset: &Dataset,
    g: &StepSurvival,
    family: ModelFamily,
    theta: &ModelParams,
    u: f64,
    w: f64,
) -> Result<f64> {
    let model = Structural::new(family, *theta)?;
    let phi0 = model.phi0(u)?;
    let obs = dataset.observations();
    let (mut f0, mut f1, mut fw) = (0.0, 0.0, 0.0);
    for (i, o) in obs.iter().enumerate() {
        if o.w > w {
            continue;
        }
        fw += 1.0;
        let a = inverse_weight(g, i, o.y, o.delta)?;
        if o.dtilde {
            if matches!(model.phi1(o.ztilde, u), Ok(p) if o.y <= p) {
                f1 += a;
            }
        } else if o.y <= phi0 {
            f0 += a;
        }
    }
    let n = obs.len() as f64;
    Ok(f0 / n + f1 / n - (1.0 - (-u).exp()) * fw / n)
}

/// KM-weighted `F̂₀(t, w)` and `F̂₁(t, w)` on the observables against the same
/// quantities counted on the latent uncensored `(T, D, W)`, with `D = 1{Z <= T}`.
/// `F₁` is taken at the constant threshold `ψ ≡ t`.
///
/// `t_probe` are times, `w_probe` instrument quantiles.
pub fn check_censoring_identity(
    design: &SimDesign,
    n_large: usize,
    t_probe: &[f64],
    w_probe: &[f64],
    seed: u64,
) -> Result<OracleCheck> {
    if n_large < MIN_N_LARGE {
        return Err(Error::InvalidArgument(format!(
            "censoring check needs n >= {MIN_N_LARGE}, got {n_large}"
        )));
    }
    if t_probe.is_empty() || t_probe.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidArgument("time probes must be positive and finite".into()));
    }
    if w_probe.is_empty() || w_probe.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::InvalidArgument("w quantiles must lie in (0, 1)".into()));
    }
    let sim = gen_dataset(&SimDesign { n: n_large, ..design.clone() }, seed)?;
    let g = fit_censoring_km(&sim.dataset);
    let obs = sim.dataset.observations();
    let weights: Vec<f64> = obs
        .iter()
        .enumerate()
        .map(|(i, o)| inverse_weight(&g, i, o.y, o.delta))
        .collect::<Result<_>>()?;
    let ws = exponential_quantiles(w_probe);

    let probes: Vec<(f64, f64)> = t_probe
        .iter()
        .flat_map(|&t| ws.iter().map(move |&w| (t, w)))
        .collect();
    let n = n_large as f64;
    let stats: Vec<[(f64, f64); 2]> = probes
        .par_iter()
        .map(|&(t, w)| {
            // (sum, sum of squares) of the paired difference per arm
            let mut s = [(0.0, 0.0); 2];
            for ((o, l), &a) in obs.iter().zip(&sim.latent).zip(&weights) {
                if o.w > w {
                    continue;
                }
                let d = usize::from(l.z <= l.t);
                let truth = f64::from(u8::from(l.t <= t));
                let mut diff = [0.0; 2];
                diff[d] -= truth;
                let dt = usize::from(o.dtilde);
                if o.y <= t {
                    diff[dt] += a;
                }
                for k in 0..2 {
                    s[k].0 += diff[k];
                    s[k].1 += diff[k] * diff[k];
                }
            }
            s
        })
        .collect();

    let mut best = (0.0, (0.0, 0.0));
    let mut max_se: f64 = 0.0;
    for (&(t, w), s) in probes.iter().zip(&stats) {
        for &(sum, sq) in s {
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
            max_se = max_se.max((var / n).sqrt());
            if mean.abs() > best.0 {
                best = (mean.abs(), (t, w));
            }
        }
    }
    Ok(OracleCheck {
        max_deviation: best.0,
        bound: 3.0 * max_se,
        argmax: best.1,
        n: n_large,
    })
}

/// Default probes for [`check_censoring_identity`] under `censoring`: times
/// where the censoring survival is still comfortably positive.
pub fn default_time_probes(censoring: &Censoring) -> Vec<f64> {
    match censoring {
        Censoring::WeibullShiftExp { shift, rate } => {
            (1..=5).map(|k| shift + k as f64 * 0.3 / rate).collect()
        }
        Censoring::LogNormalLogC { mean, .. } => {
            let c = mean.exp();
            (1..=5).map(|k| c * k as f64 / 5.0).collect()
        }
        Censoring::Uniform { lower, upper } => {
            (1..=5).map(|k| lower + (upper - lower) * k as f64 / 6.0).collect()
        }
        Censoring::None => vec![0.25, 0.5, 1.0, 1.5, 2.0],
    }
}

/// Probe quantiles `0.1, 0.2, …, 0.9` for `W`.
pub fn default_w_quantiles() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    #[test]
    fn single_row_by_hand() {
        // Weibull (1, 2, 1.5, 2), one untreated uncensored row: Y = 0.5 <=
        // φ₀(1) = 1, so M̂(1, w) = 1 - (1 - e^{-1}) = e^{-1} for w >= W.
        let ds = Dataset::new(vec![Observation::new(0.5, true, 0.5, false, 0.3)]).unwrap();
        let theta = ModelParams::new(1.0, 2.0, 1.5, 2.0);
        let g = StepSurvival::constant_one();
        let m = naive_moment(&ds, &g, ModelFamily::Weibull, &theta, 1.0, 0.3).unwrap();
        assert!((m - (-1.0f64).exp()).abs() < 1e-15);
        let m = naive_moment(&ds, &g, ModelFamily::Weibull, &theta, 1.0, 0.2).unwrap();
        assert_eq!(m, 0.0);
        let m = naive_moment(&ds, &g, ModelFamily::Weibull, &theta, 0.0, 1.0).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn uncensored_design_weights_are_one() {
        let design = SimDesign::standard(ModelFamily::Weibull, false, MIN_N_LARGE);
        let r = check_censoring_identity(&design, MIN_N_LARGE, &[0.5, 1.0], &[0.5], 5).unwrap();
        assert!(r.max_deviation < 1e-12);
    }

    #[test]
    fn rejects_small_n() {
        let design = SimDesign::standard(ModelFamily::Weibull, false, 10);
        let grid = UGrid::new(vec![1.0], vec![1.0]).unwrap();
        assert!(check_identification(&design, &design.theta_true, &grid, &[0.5], 100, 0).is_err());
    }
}
