//! Simulation designs and the Monte Carlo harness.
//!
//! Latent draws: `W, U, r` i.i.d. unit exponential, treatment time
//! `Z = sqrt(2 r U^α W^β)`, duration `T = φ_θ(Z, U)`. `α` sets how strongly
//! `Z` depends on the heterogeneity `U` (endogeneity) and `β` how strongly it
//! depends on the instrument `W`.
//!
//! Coverage uses the warp-speed scheme: each replication contributes one
//! bootstrap draw, and the pooled deviations `θ̂_b,r - θ̂_r` supply the
//! quantiles for every replication's basic interval.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::inference::{bootstrap_replicate, quantile_sorted, UniformResampler};
use crate::model::{ModelFamily, ModelParams, Structural};
use crate::rng::{self, Purpose};
use crate::solver::{estimate, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum Censoring {
    None,
    /// `C = shift + E / rate` with `E` unit exponential.
    WeibullShiftExp { shift: f64, rate: f64 },
    /// `ln C ~ N(mean, sd²)`.
    LogNormalLogC { mean: f64, sd: f64 },
    /// `C ~ U(lower, upper)`: administrative follow-up with a bounded window.
    Uniform { lower: f64, upper: f64 },
}

impl Censoring {
    /// The standard censoring scheme for `family`.
    ///
    /// The Weibull shift is followed by an exponential with mean 2 (rate 0.5),
    /// which censors about 20% and leaves about 40% treated; rate 2 would
    /// censor half the sample.
    pub fn standard(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Weibull => Censoring::WeibullShiftExp { shift: 0.3, rate: 0.5 },
            ModelFamily::LogNormal => Censoring::LogNormalLogC { mean: 1.0, sd: 1.0 },
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            Censoring::None => true,
            Censoring::WeibullShiftExp { shift, rate } => shift >= 0.0 && rate > 0.0 && shift.is_finite(),
            Censoring::LogNormalLogC { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Censoring::Uniform { lower, upper } => lower >= 0.0 && lower < upper && upper.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid censoring scheme {self:?}")))
        }
    }

    /// Upper end of the censoring support; `+inf` when unbounded.
    pub fn support_end(&self) -> f64 {
        match *self {
            Censoring::Uniform { upper, .. } => upper,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub family: ModelFamily,
    pub theta_true: ModelParams,
    pub alpha: f64,
    pub beta: f64,
    pub censoring: Censoring,
    pub n: usize,
}

impl SimDesign {
    pub fn true_theta(family: ModelFamily) -> ModelParams {
        match family {
            ModelFamily::Weibull => ModelParams::new(1.0, 2.0, 1.5, 2.0),
            ModelFamily::LogNormal => ModelParams::new(0.0, 1.0, 1.0, 1.0),
        }
    }

    /// The standard simulation design for `family` with `α = 0.25`, `β = 1`.
    pub fn standard(family: ModelFamily, censored: bool, n: usize) -> Self {
        Self {
            family,
            theta_true: Self::true_theta(family),
            alpha: 0.25,
            beta: 1.0,
            censoring: if censored {
                Censoring::standard(family)
            } else {
                Censoring::None
            },
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta_true.check(self.family)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument("alpha and beta must be finite and >= 0".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("design needs n >= 1".into()));
        }
        self.censoring.check()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let d: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("design serializes")
    }
}

/// Latent variables behind one simulated row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latent {
    pub t: f64,
    pub z: f64,
    /// `+inf` when the design has no censoring.
    pub c: f64,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub latent: Vec<Latent>,
}

/// Draws `design.n` latent rows from stream `(seed, Data, 0)`.
pub fn gen_latent(design: &SimDesign, seed: u64) -> Result<Vec<Latent>> {
    design.validate()?;
    let model = Structural::new(design.family, design.theta_true)?;
    let mut s = rng::stream(seed, Purpose::Data, 0);
    let mut out = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let w = rng::exponential(&mut s);
        let u = rng::exponential(&mut s);
        let r = rng::exponential(&mut s);
        let c = match design.censoring {
            Censoring::None => f64::INFINITY,
            Censoring::WeibullShiftExp { shift, rate } => shift + rng::exponential(&mut s) / rate,
            Censoring::LogNormalLogC { mean, sd } => (mean + sd * rng::standard_normal(&mut s)).exp(),
            Censoring::Uniform { lower, upper } => lower + (upper - lower) * rng::uniform_open(&mut s),
        };
        let z = (2.0 * r * u.powf(design.alpha) * w.powf(design.beta)).sqrt();
        let t = model.phi(z, u)?;
        out.push(Latent { t, z, c, u, w });
    }
    Ok(out)
}

/// Observables `(Y, δ, Z̃, D̃, W)` from latent rows.
pub fn observe(latent: &[Latent]) -> Result<Dataset> {
    let rows = latent
        .iter()
        .map(|l| {
            let y = l.t.min(l.c);
            let dtilde = l.z <= y;
            Observation::new(y, l.t <= l.c, if dtilde { l.z } else { y }, dtilde, l.w)
        })
        .collect();
    Dataset::new(rows)
}

pub fn gen_dataset(design: &SimDesign, seed: u64) -> Result<Simulated> {
    let latent = gen_latent(design, seed)?;
    Ok(Simulated {
        dataset: observe(&latent)?,
        latent,
    })
}

/// Coverage levels reported by the harness.
pub const COVERAGE_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Share of failed replications above which the harness gives up.
pub const MAX_FAILED_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub design: SimDesign,
    pub r: usize,
    pub failed: usize,
    pub bias: [f64; 4],
    pub se: [f64; 4],
    /// `coverage[k][l]`: parameter `k` at `COVERAGE_LEVELS[l]`.
    pub coverage: [[f64; 3]; 4],
    pub mean_treated: f64,
    pub mean_uncensored: f64,
}

#[derive(Debug, Clone, Copy)]
struct Replication {
    theta_hat: [f64; 4],
    theta_boot: [f64; 4],
    treated: f64,
    uncensored: f64,
}

fn replicate(design: &SimDesign, config: &SolverConfig, seed: u64, r: usize) -> Option<Replication> {
    let rep_seed = rng::derive_seed(seed, Purpose::Replication, r as u64);
    let sim = gen_dataset(design, rep_seed).ok()?;
    let ds = &sim.dataset;
    let cfg = SolverConfig {
        seed: rep_seed,
        ..config.clone()
    };
    let fit = estimate(ds, design.family, &cfg).ok()?;
    let boot = bootstrap_replicate(ds, design.family, &cfg, &fit.theta_hat, rep_seed, 0, &UniformResampler)?;
    Some(Replication {
        theta_hat: fit.theta_hat.to_array(),
        theta_boot: boot.to_array(),
        treated: ds.treated_fraction(),
        uncensored: ds.uncensored_fraction(),
    })
}

/// Runs `r` replications of generate, estimate, and one bootstrap draw.
pub fn run_montecarlo(design: &SimDesign, r: usize, config: &SolverConfig, seed: u64) -> Result<MonteCarloReport> {
    design.validate()?;
    config.validate()?;
    if r < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs R >= 2".into()));
    }
    let reps: Vec<Option<Replication>> = (0..r)
        .into_par_iter()
        .map(|i| replicate(design, config, seed, i))
        .collect();
    let ok: Vec<Replication> = reps.iter().flatten().copied().collect();
    let failed = r - ok.len();
    if failed as f64 > MAX_FAILED_SHARE * r as f64 || ok.len() < 2 {
        return Err(Error::Numerical(format!("{failed} of {r} replications failed")));
    }
    summarize(design, r, &ok)
}

fn summarize(design: &SimDesign, r: usize, reps: &[Replication]) -> Result<MonteCarloReport> {
    let m = reps.len() as f64;
    let truth = design.theta_true.to_array();
    let mut bias = [0.0; 4];
    let mut se = [0.0; 4];
    let mut coverage = [[0.0; 3]; 4];
    for k in 0..4 {
        let mean = reps.iter().map(|x| x.theta_hat[k]).sum::<f64>() / m;
        bias[k] = mean - truth[k];
        let ss: f64 = reps.iter().map(|x| (x.theta_hat[k] - mean).powi(2)).sum();
        se[k] = (ss / (m - 1.0)).sqrt();

        let mut dev: Vec<f64> = reps.iter().map(|x| x.theta_boot[k] - x.theta_hat[k]).collect();
        dev.sort_by(f64::total_cmp);
        for (l, level) in COVERAGE_LEVELS.iter().enumerate() {
            let a = 1.0 - level;
            let q_lo = quantile_sorted(&dev, a / 2.0);
            let q_hi = quantile_sorted(&dev, 1.0 - a / 2.0);
            let hits = reps
                .iter()
                .filter(|x| x.theta_hat[k] - q_hi <= truth[k] && truth[k] <= x.theta_hat[k] - q_lo)
                .count();
            coverage[k][l] = hits as f64 / m;
        }
    }
    Ok(MonteCarloReport {
        design: design.clone(),
        r,
        failed: r - reps.len(),
        bias,
        se,
        coverage,
        mean_treated: reps.iter().map(|x| x.treated).sum::<f64>() / m,
        mean_uncensored: reps.iter().map(|x| x.uncensored).sum::<f64>() / m,
    })
}

pub const REPORT_HEADER: &str = "param,bias,se,cov90,cov95,cov99";

impl MonteCarloReport {
    /// One row per parameter, then a `meta` row of `key=value` fields.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(REPORT_HEADER.split(','))?;
        for (k, name) in ModelParams::NAMES.iter().enumerate() {
            let c = self.coverage[k];
            w.write_record([
                name.to_string(),
                self.bias[k].to_string(),
                self.se[k].to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
            ])?;
        }
        w.write_record([
            "meta".to_string(),
            format!("dbar={}", self.mean_treated),
            format!("deltabar={}", self.mean_uncensored),
            format!("R={}", self.r),
            format!("failed={}", self.failed),
            format!("design={}", self.design.to_json_string()),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != REPORT_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{REPORT_HEADER}`"),
            });
        }
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let num = |line: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(line, format!("`{s}` is not a number")))
        };
        let mut bias = [f64::NAN; 4];
        let mut se = [f64::NAN; 4];
        let mut coverage = [[f64::NAN; 3]; 4];
        let mut meta = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if &record[0] == "meta" {
                let mut kv = std::collections::HashMap::new();
                for field in record.iter().skip(1) {
                    let (k, v) = field
                        .split_once('=')
                        .ok_or_else(|| bad(line, format!("meta field `{field}` lacks `=`")))?;
                    kv.insert(k.to_string(), v.to_string());
                }
                let get = |k: &str| kv.get(k).ok_or_else(|| bad(line, format!("meta lacks `{k}`")));
                let int = |k: &str| -> Result<usize> {
                    get(k)?.parse().map_err(|_| bad(line, format!("bad `{k}`")))
                };
                meta = Some((
                    num(line, get("dbar")?)?,
                    num(line, get("deltabar")?)?,
                    int("R")?,
                    int("failed")?,
                    SimDesign::from_json_str(get("design")?)?,
                ));
                continue;
            }
            let k = ModelParams::NAMES
                .iter()
                .position(|n| *n == &record[0])
                .ok_or_else(|| bad(line, format!("unknown parameter `{}`", &record[0])))?;
            if record.len() != 6 {
                return Err(bad(line, format!("expected 6 fields, found {}", record.len())));
            }
            bias[k] = num(line, &record[1])?;
            se[k] = num(line, &record[2])?;
            for l in 0..3 {
                coverage[k][l] = num(line, &record[3 + l])?;
            }
        }
        let (mean_treated, mean_uncensored, r, failed, design) =
            meta.ok_or_else(|| bad(0, "missing meta row".into()))?;
        if bias.iter().chain(&se).any(|x| x.is_nan()) {
            return Err(bad(0, "missing parameter rows".into()));
        }
        Ok(Self {
            design,
            r,
            failed,
            bias,
            se,
            coverage,
            mean_treated,
            mean_uncensored,
        })
    }
}

pub fn emit_report(report: &MonteCarloReport, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    report.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}
