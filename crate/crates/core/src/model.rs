//! Parametric structural families for the potential duration `T(z)`.
//!
//! `U = Λ(z, T(z))` is unit exponential, where `Λ(z, ·)` integrates the
//! structural hazard: the pre-treatment hazard before `z`, the
//! post-treatment hazard from `z` on. The maps `phi0`, `phi1` and `phi` invert
//! `Λ` on the never-treated branch, the treated branch, and their splice.
//!
//! Treatment time `z = f64::INFINITY` is the never-treated arm and is accepted
//! everywhere a treatment time is.
//!
//! Weibull: `Λ₀(t) = θ₀₀ t^θ₀₁`, `Λ₁(t) = θ₁₀ t^θ₁₁`, so the post-treatment
//! hazard is `θ₁₀ θ₁₁ t^(θ₁₁-1)`. (A coefficient of `θ₀₁` in place of `θ₁₀`
//! would not be the derivative of the inverse of `phi1`.)
//!
//! Log-normal: `Λ_d(t) = -ln(1 - Φ((ln t - μ_d)/σ_d))` with
//! `(μ₀, σ₀) = (θ₀₀, θ₀₁)` and `(μ₁, σ₁) = (θ₁₀, θ₁₁)`; `σ` is a standard
//! deviation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "weibull")]
    Weibull,
    #[serde(rename = "lognormal")]
    LogNormal,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Weibull => "weibull",
            ModelFamily::LogNormal => "lognormal",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weibull" => Ok(ModelFamily::Weibull),
            "lognormal" | "log-normal" | "log_normal" => Ok(ModelFamily::LogNormal),
            other => Err(Error::InvalidArgument(format!(
                "unknown family `{other}` (expected weibull or lognormal)"
            ))),
        }
    }
}

/// `θ = (θ₀₀, θ₁₀, θ₀₁, θ₁₁)`: pre/post location-or-scale, then pre/post shape.
///
/// Serialized as the JSON array `[θ₀₀, θ₁₀, θ₀₁, θ₁₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct ModelParams {
    pub theta00: f64,
    pub theta10: f64,
    pub theta01: f64,
    pub theta11: f64,
}

impl ModelParams {
    pub const NAMES: [&'static str; 4] = ["theta00", "theta10", "theta01", "theta11"];

    pub const fn new(theta00: f64, theta10: f64, theta01: f64, theta11: f64) -> Self {
        Self {
            theta00,
            theta10,
            theta01,
            theta11,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta00, self.theta10, self.theta01, self.theta11]
    }

    pub fn check(&self, family: ModelFamily) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite component in {a:?}")));
        }
        let ok = match family {
            ModelFamily::Weibull => a.iter().all(|&v| v > 0.0),
            ModelFamily::LogNormal => self.theta01 > 0.0 && self.theta11 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "{a:?} violates the {family} positivity constraints"
            )))
        }
    }
}

impl From<[f64; 4]> for ModelParams {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<ModelParams> for [f64; 4] {
    fn from(p: ModelParams) -> Self {
        p.to_array()
    }
}

impl FromStr for ModelParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "expected four comma-separated parameters, got `{s}`"
            )));
        }
        let mut a = [0.0; 4];
        for (slot, p) in a.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("`{p}` is not a number")))?;
        }
        Ok(a.into())
    }
}

/// A family together with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Structural {
    family: ModelFamily,
    theta: ModelParams,
}

impl Structural {
    pub fn new(family: ModelFamily, theta: ModelParams) -> Result<Self> {
        theta.check(family)?;
        Ok(Self { family, theta })
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn theta(&self) -> ModelParams {
        self.theta
    }

    /// Never-treated cumulative hazard `Λ₀` at `ln t`.
    #[inline]
    pub(crate) fn cumhaz0_ln(&self, ln_t: f64) -> f64 {
        let th = &self.theta;
        match self.family {
            ModelFamily::Weibull => th.theta00 * (th.theta01 * ln_t).exp(),
            ModelFamily::LogNormal => -normal::ln_sf((ln_t - th.theta00) / th.theta01),
        }
    }

    /// Cumulative hazard `Λ₁` of the post-treatment distribution at `ln t`.
    #[inline]
    pub(crate) fn cumhaz1_ln(&self, ln_t: f64) -> f64 {
        let th = &self.theta;
        match self.family {
            ModelFamily::Weibull => th.theta10 * (th.theta11 * ln_t).exp(),
            ModelFamily::LogNormal => -normal::ln_sf((ln_t - th.theta10) / th.theta11),
        }
    }

    /// `Λ(z, t)` from logs, for `ln_t >= ln_z`: the treated-branch level.
    #[inline]
    pub(crate) fn cumhaz_treated_ln(&self, ln_z: f64, ln_t: f64) -> f64 {
        if ln_z == f64::NEG_INFINITY {
            return self.cumhaz1_ln(ln_t);
        }
        self.cumhaz0_ln(ln_z) + (self.cumhaz1_ln(ln_t) - self.cumhaz1_ln(ln_z))
    }

    pub fn phi0(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        let th = &self.theta;
        Ok(match self.family {
            ModelFamily::Weibull => (u / th.theta00).powf(1.0 / th.theta01),
            ModelFamily::LogNormal => {
                if u == 0.0 {
                    0.0
                } else {
                    (th.theta00 + th.theta01 * normal::quantile_from_cumhaz(u)).exp()
                }
            }
        })
    }

    /// Treated-branch inverse: the `t >= 0` solving `Λ₀(z) + Λ₁(t) - Λ₁(z) = u`.
    ///
    /// Fails with [`Error::Domain`] when no such `t` exists, which happens
    /// only for `u` below the treated branch (`u < Λ₀(z) - Λ₁(z)`).
    pub fn phi1(&self, z: f64, u: f64) -> Result<f64> {
        check_level(u)?;
        check_time(z, "treatment time")?;
        if z == f64::INFINITY {
            return Err(Error::Domain("phi1 requires a finite treatment time".into()));
        }
        let ln_z = z.ln();
        let th = &self.theta;
        let target = if z == 0.0 {
            u
        } else {
            u - self.cumhaz0_ln(ln_z) + self.cumhaz1_ln(ln_z)
        };
        if target < 0.0 || target.is_nan() {
            return Err(Error::Domain(format!(
                "u = {u} lies below the treated branch at z = {z}"
            )));
        }
        Ok(match self.family {
            ModelFamily::Weibull => (target / th.theta10).powf(1.0 / th.theta11),
            ModelFamily::LogNormal => {
                if target == 0.0 {
                    0.0
                } else {
                    (th.theta10 + th.theta11 * normal::quantile_from_cumhaz(target)).exp()
                }
            }
        })
    }

    /// `φ(z, u)`: `phi0(u)` if `z > phi0(u)`, otherwise `phi1(z, u)`.
    pub fn phi(&self, z: f64, u: f64) -> Result<f64> {
        check_time(z, "treatment time")?;
        let untreated = self.phi0(u)?;
        if z > untreated {
            Ok(untreated)
        } else {
            self.phi1(z, u)
        }
    }

    /// Structural hazard `λ(z, t)`, `t > 0`.
    pub fn hazard(&self, z: f64, t: f64) -> Result<f64> {
        check_time(z, "treatment time")?;
        if !(t > 0.0) || t.is_infinite() {
            return Err(Error::Domain(format!("hazard needs a finite t > 0, got {t}")));
        }
        let th = &self.theta;
        let (scale, shape) = if t < z {
            (th.theta00, th.theta01)
        } else {
            (th.theta10, th.theta11)
        };
        Ok(match self.family {
            ModelFamily::Weibull => scale * shape * t.powf(shape - 1.0),
            ModelFamily::LogNormal => normal::hazard((t.ln() - scale) / shape) / (shape * t),
        })
    }

    /// `Λ(z, t) = ∫₀ᵗ λ(z, s) ds` in closed form.
    pub fn cumhaz(&self, z: f64, t: f64) -> Result<f64> {
        check_time(z, "treatment time")?;
        check_time(t, "time")?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let ln_t = t.ln();
        Ok(if t < z {
            self.cumhaz0_ln(ln_t)
        } else {
            self.cumhaz_treated_ln(z.ln(), ln_t)
        })
    }
}

fn check_level(u: f64) -> Result<()> {
    if u >= 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("u must be finite and >= 0, got {u}")))
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be >= 0, got {t}")))
    }
}

pub fn phi0(family: ModelFamily, theta: &ModelParams, u: f64) -> Result<f64> {
    Structural::new(family, *theta)?.phi0(u)
}

pub fn phi1(family: ModelFamily, theta: &ModelParams, z: f64, u: f64) -> Result<f64> {
    Structural::new(family, *theta)?.phi1(z, u)
}

pub fn phi(family: ModelFamily, theta: &ModelParams, z: f64, u: f64) -> Result<f64> {
    Structural::new(family, *theta)?.phi(z, u)
}

pub fn hazard(family: ModelFamily, theta: &ModelParams, z: f64, t: f64) -> Result<f64> {
    Structural::new(family, *theta)?.hazard(z, t)
}

pub fn cumhaz(family: ModelFamily, theta: &ModelParams, z: f64, t: f64) -> Result<f64> {
    Structural::new(family, *theta)?.cumhaz(z, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModelFamily::{LogNormal, Weibull};

    const WB: ModelParams = ModelParams::new(1.0, 2.0, 1.5, 2.0);
    const LN: ModelParams = ModelParams::new(0.0, 1.0, 1.0, 1.0);
    const INF: f64 = f64::INFINITY;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn phi0_examples() {
        close(phi0(Weibull, &WB, 1.0).unwrap(), 1.0, 1e-15);
        close(phi0(Weibull, &WB, 8.0).unwrap(), 4.0, 1e-14);
        close(phi0(LogNormal, &LN, std::f64::consts::LN_2).unwrap(), 1.0, 1e-15);
        assert_eq!(phi0(Weibull, &WB, 0.0).unwrap(), 0.0);
        assert_eq!(phi0(LogNormal, &LN, 0.0).unwrap(), 0.0);
        assert!(phi0(Weibull, &WB, -1.0).is_err());
        assert!(phi0(Weibull, &ModelParams::new(-1.0, 2.0, 1.5, 2.0), 1.0).is_err());
    }

    #[test]
    fn phi1_examples() {
        close(phi1(Weibull, &WB, 1.0, 1.0).unwrap(), 1.0, 1e-15);
        close(phi1(Weibull, &WB, 1.0, 3.0).unwrap(), 2f64.sqrt(), 1e-15);
        close(phi1(LogNormal, &LN, 1.0, std::f64::consts::LN_2).unwrap(), 1.0, 1e-14);
    }

    #[test]
    fn phi1_below_branch_is_domain_error() {
        // Weibull: (u - z^1.5)/2 + z^2 < 0 for z = 0.1, u = 0.
        assert!(matches!(phi1(Weibull, &WB, 0.1, 0.0), Err(Error::Domain(_))));
        // Log-normal truth has R_z > 1, so small u has no treated solution.
        assert!(matches!(phi1(LogNormal, &LN, 1.0, 0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_examples() {
        close(phi(Weibull, &WB, INF, 1.0).unwrap(), 1.0, 1e-15);
        close(phi(Weibull, &WB, 2.0, 1.0).unwrap(), 1.0, 1e-15);
        let expected = ((1.0 - 0.5f64.powf(1.5)) / 2.0 + 0.25).sqrt();
        close(phi(Weibull, &WB, 0.5, 1.0).unwrap(), expected, 1e-15);
        close(expected, 0.757_115_12, 1e-8);
        // cumhaz-inversion cross-check of the same point
        close(cumhaz(Weibull, &WB, 0.5, expected).unwrap(), 1.0, 1e-14);
    }

    #[test]
    fn hazard_examples() {
        close(hazard(Weibull, &WB, 2.0, 1.0).unwrap(), 1.5, 1e-15);
        close(hazard(Weibull, &WB, 0.5, 1.0).unwrap(), 4.0, 1e-15);
        close(hazard(LogNormal, &LN, INF, 1.0).unwrap(), 0.797_884_6, 1e-7);
        assert!(hazard(Weibull, &WB, 1.0, 0.0).is_err());
    }

    #[test]
    fn post_treatment_hazard_is_derivative_of_inverse_phi1() {
        // λ(z, t) = d/dt Λ(z, t); check with central differences of cumhaz.
        let z = 0.5;
        for &t in &[0.6, 1.0, 2.0] {
            let h = 1e-6;
            let fd = (cumhaz(Weibull, &WB, z, t + h).unwrap()
                - cumhaz(Weibull, &WB, z, t - h).unwrap())
                / (2.0 * h);
            close(hazard(Weibull, &WB, z, t).unwrap(), fd, 1e-7);
        }
    }

    #[test]
    fn cumhaz_examples() {
        close(cumhaz(Weibull, &WB, INF, 4.0).unwrap(), 8.0, 1e-14);
        for fam in [Weibull, LogNormal] {
            let th = if fam == Weibull { WB } else { LN };
            for z in [0.0, 0.3, INF] {
                assert_eq!(cumhaz(fam, &th, z, 0.0).unwrap(), 0.0);
            }
        }
        close(cumhaz(Weibull, &WB, 1.0, 2f64.sqrt()).unwrap(), 3.0, 1e-14);
        assert!(cumhaz(Weibull, &WB, 1.0, -1.0).is_err());
    }

    #[test]
    fn treatment_at_zero_uses_post_branch_throughout() {
        for fam in [Weibull, LogNormal] {
            let th = if fam == Weibull { WB } else { LN };
            let m = Structural::new(fam, th).unwrap();
            for &u in &[0.05, 0.5, 2.0] {
                let t = m.phi(0.0, u).unwrap();
                close(m.cumhaz(0.0, t).unwrap(), u, 1e-12);
                close(m.cumhaz1_ln(t.ln()), u, 1e-12);
            }
        }
    }

    #[test]
    fn params_parse_and_serde() {
        let p: ModelParams = "1, 2,1.5,2".parse().unwrap();
        assert_eq!(p, WB);
        assert!("1,2,3".parse::<ModelParams>().is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[1.0,2.0,1.5,2.0]");
        assert_eq!(serde_json::from_str::<ModelParams>(&json).unwrap(), p);
        assert_eq!("LogNormal".parse::<ModelFamily>().unwrap(), LogNormal);
        assert!("cox".parse::<ModelFamily>().is_err());
    }
}
