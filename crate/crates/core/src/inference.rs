//! Nonparametric bootstrap, percentile intervals and structural-hazard curves.
//!
//! Each bootstrap replicate resamples the rows with replacement, refits the
//! censoring Kaplan-Meier estimate on the replicate and re-minimizes `L̂`
//! from a single start at the original estimate.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ModelParams, Structural};
use crate::rng::{self, Purpose};
use crate::solver::{estimate, estimate_from_starts, SolverConfig};

/// Produces the row indices of bootstrap replicate `b`.
pub trait Resampler: Sync {
    fn indices(&self, n: usize, seed: u64, b: usize) -> Vec<usize>;
}

/// `n` draws with replacement from `0..n`, from stream `(seed, b)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformResampler;

impl Resampler for UniformResampler {
    fn indices(&self, n: usize, seed: u64, b: usize) -> Vec<usize> {
        let mut s = rng::stream(seed, Purpose::Bootstrap, b as u64);
        (0..n).map(|_| rng::index(&mut s, n)).collect()
    }
}

/// Returns the original sample every time. Only useful in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityResampler;

impl Resampler for IdentityResampler {
    fn indices(&self, n: usize, _seed: u64, _b: usize) -> Vec<usize> {
        (0..n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub family: ModelFamily,
    pub theta_hat: ModelParams,
    /// `None` marks a failed replicate; aggregation skips it.
    pub replicates: Vec<Option<ModelParams>>,
}

impl BootstrapResult {
    pub fn b(&self) -> usize {
        self.replicates.len()
    }

    pub fn successful(&self) -> impl Iterator<Item = &ModelParams> {
        self.replicates.iter().flatten()
    }

    pub fn failed_indices(&self) -> Vec<usize> {
        (0..self.b()).filter(|&i| self.replicates[i].is_none()).collect()
    }

    pub fn failed(&self) -> usize {
        self.replicates.iter().filter(|r| r.is_none()).count()
    }

    /// Percentile interval for each of the four parameters.
    pub fn intervals(&self, q_low: f64, q_high: f64) -> Result<[(f64, f64); 4]> {
        let mut out = [(0.0, 0.0); 4];
        for (k, slot) in out.iter_mut().enumerate() {
            let col: Vec<f64> = self.successful().map(|p| p.to_array()[k]).collect();
            *slot = quantile_interval(&col, q_low, q_high)?;
        }
        Ok(out)
    }

    /// Replicate table: one row per replicate plus a leading `estimate` row.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "replicate,status,theta00,theta10,theta01,theta11")?;
        let a = self.theta_hat.to_array();
        writeln!(out, "estimate,{},{},{},{},{}", self.family, a[0], a[1], a[2], a[3])?;
        for (b, r) in self.replicates.iter().enumerate() {
            match r {
                Some(p) => {
                    let a = p.to_array();
                    writeln!(out, "{b},ok,{},{},{},{}", a[0], a[1], a[2], a[3])?;
                }
                None => writeln!(out, "{b},failed,,,,")?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut head: Option<(ModelFamily, ModelParams)> = None;
        let mut replicates = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 6 {
                return Err(parse_err(line, format!("expected 6 fields, found {}", record.len())));
            }
            let theta = || -> Result<ModelParams> {
                let mut a = [0.0; 4];
                for (k, slot) in a.iter_mut().enumerate() {
                    *slot = record[k + 2]
                        .parse()
                        .map_err(|_| parse_err(line, format!("`{}` is not a number", &record[k + 2])))?;
                }
                Ok(a.into())
            };
            if &record[0] == "estimate" {
                head = Some((record[1].parse()?, theta()?));
                continue;
            }
            let b: usize = record[0]
                .parse()
                .map_err(|_| parse_err(line, format!("bad replicate index `{}`", &record[0])))?;
            if b != replicates.len() {
                return Err(parse_err(line, format!("replicate {b} out of order")));
            }
            match &record[1] {
                "ok" => replicates.push(Some(theta()?)),
                "failed" => replicates.push(None),
                s => return Err(parse_err(line, format!("unknown status `{s}`"))),
            }
        }
        let (family, theta_hat) =
            head.ok_or_else(|| parse_err(1, "missing `estimate` row".into()))?;
        Ok(Self {
            family,
            theta_hat,
            replicates,
        })
    }
}

/// Estimates `θ̂` with `config`, then runs `b` replicates around it.
pub fn bootstrap(
    dataset: &Dataset,
    family: ModelFamily,
    config: &SolverConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 1".into()));
    }
    let fit = estimate(dataset, family, config)?;
    bootstrap_from(dataset, family, config, &fit.theta_hat, b, seed, &UniformResampler)
}

/// Bootstrap around a given `θ̂`.
pub fn bootstrap_from<R: Resampler>(
    dataset: &Dataset,
    family: ModelFamily,
    config: &SolverConfig,
    theta_hat: &ModelParams,
    b: usize,
    seed: u64,
    resampler: &R,
) -> Result<BootstrapResult> {
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 1".into()));
    }
    theta_hat.check(family)?;
    let replicates: Vec<Option<ModelParams>> = (0..b)
        .into_par_iter()
        .map(|i| bootstrap_replicate(dataset, family, config, theta_hat, seed, i, resampler))
        .collect();
    let failed = replicates.iter().filter(|r| r.is_none()).count();
    if 2 * failed > b {
        return Err(Error::Numerical(format!(
            "{failed} of {b} bootstrap replicates failed"
        )));
    }
    Ok(BootstrapResult {
        family,
        theta_hat: *theta_hat,
        replicates,
    })
}

/// One replicate: resample, refit, and minimize from `θ̂`. `None` when the
/// refit errors or the local search does not converge.
pub fn bootstrap_replicate<R: Resampler>(
    dataset: &Dataset,
    family: ModelFamily,
    config: &SolverConfig,
    theta_hat: &ModelParams,
    seed: u64,
    b: usize,
    resampler: &R,
) -> Option<ModelParams> {
    let idx = resampler.indices(dataset.len(), seed, b);
    let sample = dataset.resample(&idx).ok()?;
    let cfg = SolverConfig {
        n_starts: 1,
        ..config.clone()
    };
    let fit = estimate_from_starts(&sample, family, &cfg, std::slice::from_ref(theta_hat)).ok()?;
    let start = fit.per_start_minima.first()?;
    start.converged.then_some(fit.theta_hat)
}

/// Type-7 quantile of already sorted, finite data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantiles at `q_low` and `q_high`.
pub fn quantile_interval(samples: &[f64], q_low: f64, q_high: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(0.0..=1.0).contains(&q_low) || !(0.0..=1.0).contains(&q_high) || q_low > q_high {
        return Err(Error::InvalidArgument(format!(
            "quantile levels ({q_low}, {q_high}) must satisfy 0 <= low <= high <= 1"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&s, q_low), quantile_sorted(&s, q_high)))
}

/// Equal-tailed percentile interval at confidence `level`.
pub fn percentile_ci(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let (lo, hi) = level_quantiles(level)?;
    quantile_interval(samples, lo, hi)
}

/// `((1 - level)/2, 1 - (1 - level)/2)`.
pub fn level_quantiles(level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level must lie strictly between 0 and 1, got {level}"
        )));
    }
    let a = (1.0 - level) / 2.0;
    Ok((a, 1.0 - a))
}

/// A hazard curve arm: a treatment time (possibly `inf`) or the difference
/// between treatment at 0 and never treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    Treated(f64),
    Difference,
}

impl Arm {
    pub const NEVER: Arm = Arm::Treated(f64::INFINITY);

    fn hazard(&self, model: &Structural, t: f64) -> Result<f64> {
        match *self {
            Arm::Treated(z) => model.hazard(z, t),
            Arm::Difference => Ok(model.hazard(0.0, t)? - model.hazard(f64::INFINITY, t)?),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Treated(z) => write!(f, "{z}"),
            Arm::Difference => f.write_str("diff"),
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "never" => Ok(Arm::NEVER),
            "diff" | "difference" => Ok(Arm::Difference),
            other => match other.parse::<f64>() {
                Ok(z) if z >= 0.0 => Ok(Arm::Treated(z)),
                _ => Err(Error::InvalidArgument(format!(
                    "arm `{s}` is not a treatment time >= 0, `inf` or `diff`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardCurve {
    pub arm: Arm,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no time points".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "time points must be positive, finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn curve_values(model: &Structural, arm: &Arm, times: &[f64]) -> Result<Vec<f64>> {
    times.iter().map(|&t| arm.hazard(model, t)).collect()
}

pub fn hazard_curves(
    family: ModelFamily,
    theta: &ModelParams,
    arms: &[Arm],
    times: &[f64],
) -> Result<Vec<HazardCurve>> {
    check_times(times)?;
    let model = Structural::new(family, *theta)?;
    arms.iter()
        .map(|arm| {
            Ok(HazardCurve {
                arm: *arm,
                times: times.to_vec(),
                values: curve_values(&model, arm, times)?,
                lower: None,
                upper: None,
            })
        })
        .collect()
}

/// Fewest successful replicates accepted by [`curve_bands`].
pub const MIN_BAND_REPLICATES: usize = 10;

/// Point curves at `θ̂` with pointwise percentile bands at `level`.
pub fn curve_bands(
    boot: &BootstrapResult,
    arms: &[Arm],
    times: &[f64],
    level: f64,
) -> Result<Vec<HazardCurve>> {
    let (lo, hi) = level_quantiles(level)?;
    curve_bands_q(boot, arms, times, lo, hi)
}

pub fn curve_bands_q(
    boot: &BootstrapResult,
    arms: &[Arm],
    times: &[f64],
    q_low: f64,
    q_high: f64,
) -> Result<Vec<HazardCurve>> {
    let models: Vec<Structural> = boot
        .successful()
        .map(|p| Structural::new(boot.family, *p))
        .collect::<Result<_>>()?;
    if models.len() < MIN_BAND_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bands need at least {MIN_BAND_REPLICATES} successful replicates, got {}",
            models.len()
        )));
    }
    let mut curves = hazard_curves(boot.family, &boot.theta_hat, arms, times)?;
    for curve in &mut curves {
        let draws: Vec<Vec<f64>> = models
            .iter()
            .map(|m| curve_values(m, &curve.arm, times))
            .collect::<Result<_>>()?;
        let mut lower = Vec::with_capacity(times.len());
        let mut upper = Vec::with_capacity(times.len());
        for k in 0..times.len() {
            let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let (l, u) = quantile_interval(&col, q_low, q_high)?;
            lower.push(l);
            upper.push(u);
        }
        curve.lower = Some(lower);
        curve.upper = Some(upper);
    }
    Ok(curves)
}

pub fn write_curves_csv<W: Write>(curves: &[HazardCurve], out: &mut W) -> Result<()> {
    writeln!(out, "t,arm,value,lower,upper")?;
    for c in curves {
        for (k, (t, v)) in c.times.iter().zip(&c.values).enumerate() {
            let band = |b: &Option<Vec<f64>>| b.as_ref().map_or(String::new(), |b| b[k].to_string());
            writeln!(out, "{t},{},{v},{},{}", c.arm, band(&c.lower), band(&c.upper))?;
        }
    }
    Ok(())
}

pub fn write_ci_csv<W: Write>(theta_hat: &ModelParams, intervals: &[(f64, f64); 4], out: &mut W) -> Result<()> {
    writeln!(out, "param,estimate,lower,upper")?;
    for (k, name) in ModelParams::NAMES.iter().enumerate() {
        let (l, u) = intervals[k];
        writeln!(out, "{name},{},{l},{u}", theta_hat.to_array()[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_one_to_hundred() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = percentile_ci(&s, 0.95).unwrap();
        assert!((lo - 3.475).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(percentile_ci(&[2.0, 2.0, 2.0], 0.9).unwrap(), (2.0, 2.0));
        assert!(percentile_ci(&[1.0, 2.0], 0.0).is_err());
        assert!(percentile_ci(&[1.0, 2.0], 1.0).is_err());
        assert!(percentile_ci(&[1.0], 0.5).is_err());
        assert!(percentile_ci(&[1.0, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn weibull_curve_values() {
        let theta = ModelParams::new(1.0, 2.0, 1.5, 2.0);
        let arms = [Arm::NEVER, Arm::Treated(0.0), Arm::Difference];
        let c = hazard_curves(ModelFamily::Weibull, &theta, &arms, &[1.0]).unwrap();
        assert!((c[0].values[0] - 1.5).abs() < 1e-12);
        assert!((c[1].values[0] - 4.0).abs() < 1e-12);
        assert!((c[2].values[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn arm_parsing() {
        assert_eq!("inf".parse::<Arm>().unwrap(), Arm::NEVER);
        assert_eq!("0".parse::<Arm>().unwrap(), Arm::Treated(0.0));
        assert_eq!("diff".parse::<Arm>().unwrap(), Arm::Difference);
        assert!("-1".parse::<Arm>().is_err());
        assert!("soon".parse::<Arm>().is_err());
        assert_eq!(Arm::NEVER.to_string(), "inf");
    }

    #[test]
    fn replicate_csv_round_trip() {
        let r = BootstrapResult {
            family: ModelFamily::LogNormal,
            theta_hat: ModelParams::new(0.1, -0.2, 1.0 / 3.0, 2.0),
            replicates: vec![Some(ModelParams::new(0.3, 0.1, 0.7, 1.1)), None],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(BootstrapResult::read_csv(buf.as_slice()).unwrap(), r);
        assert_eq!(r.failed_indices(), vec![1]);
    }

    #[test]
    fn equal_replicates_collapse_bands() {
        let theta = ModelParams::new(1.0, 2.0, 1.5, 2.0);
        let boot = BootstrapResult {
            family: ModelFamily::Weibull,
            theta_hat: theta,
            replicates: vec![Some(theta); 12],
        };
        let times = [0.5, 1.0, 2.0];
        let c = curve_bands(&boot, &[Arm::Treated(0.0), Arm::NEVER], &times, 0.95).unwrap();
        for curve in &c {
            assert_eq!(curve.lower.as_ref().unwrap(), &curve.values);
            assert_eq!(curve.upper.as_ref().unwrap(), &curve.values);
        }
        let few = BootstrapResult {
            replicates: vec![Some(theta); 9],
            ..boot
        };
        assert!(curve_bands(&few, &[Arm::NEVER], &times, 0.95).is_err());
    }
}
