//! Censoring-weighted empirical operators and the minimum-distance objective.
//!
//! With `a_i = δ_i / Ĝ(Y_i)`:
//!
//! ```text
//! F̂₀(t, w)   = n⁻¹ Σ a_i 1{Y_i <= t,     D̃_i = 0, W_i <= w}
//! F̂₁(ψ, w)   = n⁻¹ Σ a_i 1{Y_i <= ψ(Z̃_i), D̃_i = 1, W_i <= w}
//! F̂_W(w)     = n⁻¹ Σ 1{W_i <= w}
//! M̂_θ(u, w)  = F̂₀(φ_θ0(u), w) + F̂₁(φ_θ1(·, u), w) - (1 - e^{-u}) F̂_W(w)
//! L̂(θ)       = (nm)⁻¹ Σ_i Σ_j p(u_j) M̂_θ(u_j, W_i)²
//! ```
//!
//! Because `φ_θ0` and `φ_θ1(z, ·)` invert `Λ(z, ·)`, the indicator
//! `1{Y_k <= φ(u)}` equals `1{v_k <= u}` with the row level `v_k = Λ₀(Y_k)`
//! for untreated rows and `v_k = Λ₀(Z̃_k) + Λ₁(Y_k) - Λ₁(Z̃_k)` for treated
//! ones. Levels cost O(n) per θ. A treated row whose `φ_θ1(Z̃_k, u)` does not
//! exist has `v_k > u`, so it contributes zero there. Every `u_j` then reduces
//! to a prefix sum over rows ordered by `W`, giving O(n·m) per objective.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::km::StepSurvival;
use crate::model::Structural;

/// Below this the inverse censoring weight is treated as undefined.
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFn {
    /// `p(u) = e^{-u}`
    #[default]
    Exponential,
    /// `p(u) = 1`
    Constant,
}

impl WeightFn {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            WeightFn::Exponential => (-u).exp(),
            WeightFn::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl UGrid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "grid needs at least one point and one weight per point".into(),
            ));
        }
        if points.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(Error::InvalidArgument("grid points must be finite and >= 0".into()));
        }
        if points.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument("grid points must be strictly increasing".into()));
        }
        if weights.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidArgument("grid weights must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn with_weight_fn(points: Vec<f64>, weight: WeightFn) -> Result<Self> {
        let weights = points.iter().map(|&u| weight.eval(u)).collect();
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.points.last().expect("grid is nonempty")
    }
}

#[derive(Debug, Clone, Copy)]
struct Row {
    a: f64,
    treated: bool,
    ln_y: f64,
    ln_z: f64,
}

/// A dataset with its inverse censoring weights and `W` ranks cached.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    n: usize,
    /// Position `p` holds the original row `order[p]`.
    order: Vec<usize>,
    rows: Vec<Row>,
    y: Vec<f64>,
    ztilde: Vec<f64>,
    w: Vec<f64>,
    /// Exclusive end (in sorted order) of each run of tied `W`.
    group_ends: Vec<usize>,
    /// `F̂_W` at each sorted position.
    fw: Vec<f64>,
    weights: Vec<f64>,
}

pub fn prepare(dataset: &Dataset, g: &StepSurvival) -> Result<WeightedSample> {
    let obs = dataset.observations();
    let n = obs.len();
    let mut weights = Vec::with_capacity(n);
    for (i, o) in obs.iter().enumerate() {
        if o.delta {
            let survival = g.eval(o.y);
            if !(survival >= WEIGHT_FLOOR) {
                return Err(Error::ZeroWeight {
                    index: i,
                    y: o.y,
                    survival,
                });
            }
            weights.push(1.0 / survival);
        } else {
            weights.push(0.0);
        }
    }

    let order = dataset.sorted_w_index().to_vec();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut ztilde = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &i in &order {
        let o = &obs[i];
        rows.push(Row {
            a: weights[i],
            treated: o.dtilde,
            ln_y: o.y.ln(),
            ln_z: o.ztilde.ln(),
        });
        y.push(o.y);
        ztilde.push(o.ztilde);
        w.push(o.w);
    }

    let mut group_ends = Vec::new();
    let mut fw = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && w[end] == w[start] {
            end += 1;
        }
        let f = end as f64 / n as f64;
        fw[start..end].fill(f);
        group_ends.push(end);
        start = end;
    }

    Ok(WeightedSample {
        n,
        order,
        rows,
        y,
        ztilde,
        w,
        group_ends,
        fw,
        weights,
    })
}

impl WeightedSample {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `a_i = δ_i / Ĝ(Y_i)` in original row order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Original row indices in ascending-`W` order.
    pub fn sorted_order(&self) -> &[usize] {
        &self.order
    }

    /// `F̂_W(W_i)` along the sorted order.
    pub fn fw_sorted(&self) -> &[f64] {
        &self.fw
    }

    pub fn fw_at(&self, w: f64) -> f64 {
        self.w.partition_point(|&x| x <= w) as f64 / self.n as f64
    }

    /// Row levels `v_k` in sorted order; rows with zero weight get `+inf`.
    fn levels(&self, model: &Structural, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.rows.iter().map(|r| {
            if r.a == 0.0 {
                f64::INFINITY
            } else {
                let v = if r.treated {
                    model.cumhaz_treated_ln(r.ln_z, r.ln_y)
                } else {
                    model.cumhaz0_ln(r.ln_y)
                };
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
        }));
    }
}

/// `F̂₀(t, w)`.
pub fn fhat0(ws: &WeightedSample, t: f64, w: f64) -> f64 {
    let mut sum = 0.0;
    for p in 0..ws.n {
        let r = &ws.rows[p];
        if !r.treated && ws.y[p] <= t && ws.w[p] <= w {
            sum += r.a;
        }
    }
    sum / ws.n as f64
}

/// `F̂₁(ψ, w)` with `ψ = threshold`, evaluated on the treated rows.
pub fn fhat1<F>(ws: &WeightedSample, threshold: F, w: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut sum = 0.0;
    for p in 0..ws.n {
        let r = &ws.rows[p];
        if r.treated && ws.w[p] <= w {
            let t = threshold(ws.ztilde[p])?;
            if ws.y[p] <= t {
                sum += r.a;
            }
        }
    }
    Ok(sum / ws.n as f64)
}

/// `M̂_θ(u, W_i)` for every row, in ascending-`W` order.
pub fn mhat_row(ws: &WeightedSample, model: &Structural, u: f64) -> Result<Vec<f64>> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::Domain(format!("u must be finite and >= 0, got {u}")));
    }
    let mut levels = Vec::with_capacity(ws.n);
    ws.levels(model, &mut levels);
    let inv_n = 1.0 / ws.n as f64;
    let cu = -(-u).exp_m1();
    let mut out = vec![0.0; ws.n];
    let mut s = 0.0;
    let mut start = 0;
    for &end in &ws.group_ends {
        for k in start..end {
            if levels[k] <= u {
                s += ws.rows[k].a;
            }
        }
        let m = s * inv_n - cu * ws.fw[start];
        out[start..end].fill(m);
        start = end;
    }
    Ok(out)
}

/// Reusable buffers for repeated objective evaluations on one sample.
#[derive(Debug, Default, Clone)]
pub struct ObjectiveScratch {
    levels: Vec<f64>,
    prefix: Vec<f64>,
    acc: Vec<f64>,
    cu: Vec<f64>,
}

/// `L̂(θ)`.
pub fn objective(ws: &WeightedSample, model: &Structural, grid: &UGrid) -> f64 {
    objective_with(ws, model, grid, &mut ObjectiveScratch::default())
}

pub fn objective_with(
    ws: &WeightedSample,
    model: &Structural,
    grid: &UGrid,
    scratch: &mut ObjectiveScratch,
) -> f64 {
    let m = grid.len();
    let inv_n = 1.0 / ws.n as f64;
    let points = grid.points();

    ws.levels(model, &mut scratch.levels);
    scratch.prefix.clear();
    scratch.prefix.resize(m, 0.0);
    scratch.acc.clear();
    scratch.acc.resize(m, 0.0);
    scratch.cu.clear();
    scratch.cu.extend(points.iter().map(|&u| -(-u).exp_m1()));

    let prefix = &mut scratch.prefix[..];
    let acc = &mut scratch.acc[..];
    let cu = &scratch.cu[..];
    let levels = &scratch.levels[..];

    let mut start = 0;
    for &end in &ws.group_ends {
        for k in start..end {
            let v = levels[k];
            if v <= points[m - 1] {
                let a = ws.rows[k].a;
                let j0 = points.partition_point(|&u| u < v);
                for s in &mut prefix[j0..] {
                    *s += a;
                }
            }
        }
        let f = ws.fw[start];
        let size = (end - start) as f64;
        for ((acc, &s), &c) in acc.iter_mut().zip(prefix.iter()).zip(cu) {
            let d = s * inv_n - c * f;
            *acc += size * d * d;
        }
        start = end;
    }

    let total: f64 = acc.iter().zip(grid.weights()).map(|(a, p)| p * a).sum();
    total / (ws.n as f64 * m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::km::fit_censoring_km;
    use crate::model::{ModelFamily, ModelParams};

    fn three_rows() -> Dataset {
        Dataset::new(vec![
            Observation::new(1.0, true, 1.0, false, 0.3),
            Observation::new(2.0, false, 2.0, false, 0.1),
            Observation::new(3.0, true, 3.0, false, 0.2),
        ])
        .unwrap()
    }

    #[test]
    fn weights_from_km() {
        let ds = three_rows();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        assert_eq!(ws.weights(), &[1.0, 0.0, 2.0]);
        assert_eq!(ws.sorted_order(), &[1, 2, 0]);
        assert_eq!(ws.fw_sorted(), &[1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn uncensored_weights_are_one() {
        let ds = Dataset::new(vec![
            Observation::new(1.0, true, 0.5, true, 0.3),
            Observation::new(2.0, true, 2.0, false, 0.1),
        ])
        .unwrap();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        assert_eq!(ws.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn single_row() {
        let ds = Dataset::new(vec![Observation::new(1.0, true, 1.0, false, 0.0)]).unwrap();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        assert_eq!(ws.weights(), &[1.0]);
        assert_eq!(ws.fw_sorted(), &[1.0]);
    }

    #[test]
    fn zero_weight_is_reported() {
        // last row censored and alone at risk -> G drops to 0 after it;
        // an uncensored row strictly beyond is impossible in one sample, so
        // build the survival by hand.
        let ds = three_rows();
        let g = fit_censoring_km(&Dataset::new(vec![
            Observation::new(0.5, false, 0.5, false, 0.0),
        ])
        .unwrap());
        assert!(matches!(prepare(&ds, &g), Err(Error::ZeroWeight { index: 0, .. })));
    }

    #[test]
    fn fhat0_hand_sum() {
        let ds = three_rows();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        assert_eq!(fhat0(&ws, 3.0, f64::INFINITY), (1.0 + 0.0 + 2.0) / 3.0);
        assert_eq!(fhat0(&ws, 0.0, f64::INFINITY), 0.0);
        assert_eq!(fhat0(&ws, 3.0, 0.25), 2.0 / 3.0);
    }

    #[test]
    fn fhat1_thresholds() {
        let ds = Dataset::new(vec![
            Observation::new(1.0, true, 0.5, true, 0.3),
            Observation::new(2.0, true, 0.2, true, 0.1),
            Observation::new(3.0, true, 3.0, false, 0.2),
        ])
        .unwrap();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        assert_eq!(fhat1(&ws, |_| Ok(0.0), f64::INFINITY).unwrap(), 0.0);
        assert_eq!(
            fhat1(&ws, |_| Ok(f64::INFINITY), f64::INFINITY).unwrap(),
            2.0 / 3.0
        );
        // ψ(z) = 3z: row 0 (1 <= 1.5) yes, row 1 (2 <= 0.6) no
        assert_eq!(fhat1(&ws, |z| Ok(3.0 * z), f64::INFINITY).unwrap(), 1.0 / 3.0);
        assert!(fhat1(&ws, |_| Err(Error::Domain("x".into())), 1.0).is_err());
    }

    #[test]
    fn single_observation_moment() {
        // δ=1, D̃=0, Y=1; Weibull θ00=1, θ01=1 -> φ0(u) = u; pick u = 2.
        let ds = Dataset::new(vec![Observation::new(1.0, true, 1.0, false, 0.0)]).unwrap();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        let model =
            Structural::new(ModelFamily::Weibull, ModelParams::new(1.0, 1.0, 1.0, 1.0)).unwrap();
        let u = 2.0;
        let m = mhat_row(&ws, &model, u).unwrap();
        let expected = 1.0 - (1.0 - (-u).exp());
        assert!((m[0] - expected).abs() < 1e-15);

        let grid = UGrid::new(vec![u], vec![0.7]).unwrap();
        let l = objective(&ws, &model, &grid);
        assert!((l - 0.7 * expected * expected).abs() < 1e-15);
    }

    #[test]
    fn small_u_moment_vanishes() {
        let ds = three_rows();
        let ws = prepare(&ds, &fit_censoring_km(&ds)).unwrap();
        let model =
            Structural::new(ModelFamily::Weibull, ModelParams::new(1.0, 2.0, 1.5, 2.0)).unwrap();
        let u = 1e-9;
        let m = mhat_row(&ws, &model, u).unwrap();
        for (v, f) in m.iter().zip(ws.fw_sorted()) {
            assert_eq!(*v, (-u).exp_m1() * f);
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(UGrid::new(vec![], vec![]).is_err());
        assert!(UGrid::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(UGrid::new(vec![1.0], vec![0.0]).is_err());
        assert!(UGrid::new(vec![-1.0], vec![1.0]).is_err());
        let g = UGrid::with_weight_fn(vec![0.0, 1.0], WeightFn::Exponential).unwrap();
        assert_eq!(g.weights(), &[1.0, (-1.0f64).exp()]);
    }
}
