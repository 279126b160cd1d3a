use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use dyniv::inference::{
    bootstrap_from, curve_bands_q, level_quantiles, write_ci_csv, write_curves_csv, UniformResampler,
};
use dyniv::oracle::{
    check_censoring_identity, check_identification, default_time_probes, default_w_quantiles, perturbed,
    OracleCheck,
};
use dyniv::{
    build_ugrid, estimate as fit, gen_dataset, hazard_curves, run_montecarlo, Arm, BootstrapResult, Censoring,
    Dataset, Error, ModelFamily, ModelParams, SimDesign, SolverConfig, WeightFn,
};

use crate::{SeedArg, SolverArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io_at(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::InvalidParams(_) | Error::Config { .. } => 1,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::InvalidData(_)
            | Error::ZeroWeight { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::Numerical(_) | Error::Domain(_) => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = Result<(), CliError>;

fn seed_of(arg: &SeedArg) -> u64 {
    arg.seed.unwrap_or(0)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io_at(path, e))
}

fn solver_config(args: &SolverArgs, seed: u64) -> Result<SolverConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => SolverConfig::from_json_str(&read_text(p)?)?,
        None => SolverConfig::default(),
    };
    if let Some(s) = args.starts {
        cfg.n_starts = s;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load_csv(path).map_err(|e| match e {
        Error::Io(io) => CliError::io_at(path, io),
        other => CliError {
            message: format!("{}: {other}", path.display()),
            ..CliError::from(other)
        },
    })
}

/// Writes `text` to `out` (or stdout when absent) and echoes it to stdout.
fn emit(text: &str, out: Option<&Path>) -> CliResult {
    if let Some(p) = out {
        std::fs::write(p, text).map_err(|e| CliError::io_at(p, e))?;
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> dyniv::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("writers emit UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CensoringArg {
    None,
    Standard,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "weibull")]
    family: ModelFamily,
    /// True parameters `θ00,θ10,θ01,θ11`; defaults to the standard design values.
    #[arg(long)]
    theta: Option<ModelParams>,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_enum, default_value = "none")]
    censoring: CensoringArg,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let design = SimDesign {
        family: a.family,
        theta_true: a.theta.unwrap_or_else(|| SimDesign::true_theta(a.family)),
        alpha: a.alpha,
        beta: a.beta,
        censoring: match a.censoring {
            CensoringArg::None => Censoring::None,
            CensoringArg::Standard => Censoring::standard(a.family),
        },
        n: a.n,
    };
    let sim = gen_dataset(&design, seed_of(&a.seed))?;
    let text = csv_text(|b| sim.dataset.write_csv(b))?;
    match &a.out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| CliError::io_at(p, e))?;
            println!(
                "wrote {} rows to {} (treated {}, uncensored {})",
                sim.dataset.len(),
                p.display(),
                sim.dataset.treated_fraction(),
                sim.dataset.uncensored_fraction()
            );
            Ok(())
        }
        None => emit(&text, None),
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: ModelFamily,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn estimate(a: EstimateArgs) -> CliResult {
    let ds = load_data(&a.data)?;
    let cfg = solver_config(&a.solver, seed_of(&a.seed))?;
    let result = fit(&ds, a.family, &cfg)?;
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&result).map_err(Error::from)?;
        std::fs::write(p, json + "\n").map_err(|e| CliError::io_at(p, e))?;
    }
    let th = result.theta_hat.to_array();
    let mut table = String::from("param,estimate\n");
    for (name, v) in ModelParams::NAMES.iter().zip(th) {
        table += &format!("{name},{v}\n");
    }
    table += &format!("objective,{}\n", result.objective_value);
    table += &format!("feasible,{}\n", result.feasibility_flag);
    table += &format!("starts_converged,{}\n", result.n_starts_converged);
    emit(&table, None)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: ModelFamily,
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Explicit lower quantile; overrides --level together with --q-high.
    #[arg(long, requires = "q_high")]
    q_low: Option<f64>,
    #[arg(long, requires = "q_low")]
    q_high: Option<f64>,
    /// Start from the estimate in this result JSON instead of re-estimating.
    #[arg(long)]
    theta_from: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// CI table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicate CSV; defaults to `<out stem>.replicates.csv` next to --out.
    #[arg(long)]
    replicates_out: Option<PathBuf>,
}

fn read_result(path: &Path) -> Result<(ModelFamily, ModelParams), CliError> {
    let v: serde_json::Value = serde_json::from_str(&read_text(path)?).map_err(|e| CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    let bad = || CliError {
        code: 2,
        message: format!("{}: expected a result with `family` and `theta_hat`", path.display()),
    };
    let family: ModelFamily = v["family"].as_str().ok_or_else(bad)?.parse()?;
    let arr = v["theta_hat"].as_array().filter(|a| a.len() == 4).ok_or_else(bad)?;
    let mut theta = [0.0; 4];
    for (slot, x) in theta.iter_mut().zip(arr) {
        *slot = x.as_f64().ok_or_else(bad)?;
    }
    let theta = ModelParams::from(theta);
    theta.check(family)?;
    Ok((family, theta))
}

pub fn bootstrap(a: BootstrapArgs) -> CliResult {
    if a.b == 0 {
        return Err(CliError::usage("--B must be at least 1"));
    }
    let (q_low, q_high) = match (a.q_low, a.q_high) {
        (Some(l), Some(h)) => (l, h),
        _ => level_quantiles(a.level)?,
    };
    let ds = load_data(&a.data)?;
    let seed = seed_of(&a.seed);
    let cfg = solver_config(&a.solver, seed)?;
    let theta_hat = match &a.theta_from {
        Some(p) => {
            let (family, theta) = read_result(p)?;
            if family != a.family {
                return Err(CliError::usage(format!(
                    "{} holds a {family} estimate, not {}",
                    p.display(),
                    a.family
                )));
            }
            theta
        }
        None => fit(&ds, a.family, &cfg)?.theta_hat,
    };
    let boot = bootstrap_from(&ds, a.family, &cfg, &theta_hat, a.b, seed, &UniformResampler)?;
    let intervals = boot.intervals(q_low, q_high)?;
    let table = csv_text(|b| write_ci_csv(&boot.theta_hat, &intervals, b))?;

    let replicates_path = a.replicates_out.clone().or_else(|| {
        a.out.as_ref().map(|o| {
            let stem = o.file_stem().map_or("bootstrap".into(), |s| s.to_string_lossy().into_owned());
            o.with_file_name(format!("{stem}.replicates.csv"))
        })
    });
    if let Some(p) = &replicates_path {
        let text = csv_text(|b| boot.write_csv(b))?;
        std::fs::write(p, text).map_err(|e| CliError::io_at(p, e))?;
    }
    emit(&table, a.out.as_deref())?;
    if boot.failed() > 0 {
        eprintln!("warning: {} of {} replicates failed and were dropped", boot.failed(), boot.b());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MontecarloArgs {
    /// Design JSON with keys family, theta_true, alpha, beta, censoring, n.
    #[arg(long)]
    design: PathBuf,
    #[arg(long = "R")]
    r: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn montecarlo(a: MontecarloArgs) -> CliResult {
    if a.r < 2 {
        return Err(CliError::usage("--R must be at least 2"));
    }
    let design = SimDesign::from_json_str(&read_text(&a.design)?)?;
    let seed = seed_of(&a.seed);
    let cfg = solver_config(&a.solver, seed)?;
    let report = run_montecarlo(&design, a.r, &cfg, seed)?;
    let text = csv_text(|b| report.write_csv(b))?;
    emit(&text, a.out.as_deref())
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Result JSON from `estimate`.
    #[arg(long)]
    theta_from: PathBuf,
    /// Must match the result's family when given.
    #[arg(long)]
    family: Option<ModelFamily>,
    /// Comma-separated arms: treatment times, `inf` (never treated), `diff`.
    #[arg(long, default_value = "0,inf", value_delimiter = ',')]
    arms: Vec<Arm>,
    #[arg(long, default_value_t = 2.0)]
    tmax: f64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Replicate CSV from `bootstrap`.
    #[arg(long)]
    bands_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn curves(a: CurvesArgs) -> CliResult {
    let (family, theta) = read_result(&a.theta_from)?;
    if let Some(f) = a.family {
        if f != family {
            return Err(CliError::usage(format!("--family {f} does not match the result's {family}")));
        }
    }
    if a.points == 0 || !(a.tmax > 0.0 && a.tmax.is_finite()) {
        return Err(CliError::usage("--points must be positive and --tmax positive and finite"));
    }
    let times: Vec<f64> = (1..=a.points).map(|k| a.tmax * k as f64 / a.points as f64).collect();
    let curves = match &a.bands_from {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::io_at(p, e))?;
            let mut boot = BootstrapResult::read_csv(std::io::BufReader::new(file))?;
            if boot.family != family {
                return Err(CliError::usage(format!(
                    "{} holds {} replicates, not {family}",
                    p.display(),
                    boot.family
                )));
            }
            boot.theta_hat = theta;
            let (lo, hi) = level_quantiles(a.level)?;
            curve_bands_q(&boot, &a.arms, &times, lo, hi)?
        }
        None => hazard_curves(family, &theta, &a.arms, &times)?,
    };
    let text = csv_text(|b| write_curves_csv(&curves, b))?;
    emit(&text, a.out.as_deref())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Design JSON; defaults to the standard censored design of --family.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value = "weibull")]
    family: ModelFamily,
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Evaluate the identification equation here instead of at the truth.
    #[arg(long, conflicts_with = "perturb")]
    theta: Option<ModelParams>,
    /// Evaluate at a deliberately wrong θ (θ00 moved away from the truth).
    #[arg(long)]
    perturb: bool,
    #[command(flatten)]
    seed: SeedArg,
}

fn report_line(name: &str, c: &OracleCheck) -> String {
    format!(
        "{name},{},{},{},{},{}",
        c.max_deviation,
        c.bound,
        c.argmax.0,
        c.argmax.1,
        if c.passed() { "pass" } else { "fail" }
    )
}

pub fn verify(a: VerifyArgs) -> CliResult {
    let design = match &a.design {
        Some(p) => SimDesign::from_json_str(&read_text(p)?)?,
        None => SimDesign::standard(a.family, true, a.n),
    };
    if a.n < 100_000 {
        eprintln!(
            "warning: n = {} is small; the counting bound is loose and the check has little power",
            a.n
        );
    }
    let seed = seed_of(&a.seed);
    let theta = match (a.theta, a.perturb) {
        (Some(t), _) => t,
        (None, true) => perturbed(&design.theta_true),
        (None, false) => design.theta_true,
    };
    let grid = build_ugrid(100, 0.025, 0.975, WeightFn::Exponential)?;
    let wq = default_w_quantiles();
    let mut text = String::from("check,max_deviation,bound,probe_1,probe_2,status\n");
    let ident = check_identification(&design, &theta, &grid, &wq, a.n, seed)?;
    text += &report_line("identification", &ident);
    text.push('\n');
    let mut ok = ident.passed();
    if design.censoring != Censoring::None {
        let probes = default_time_probes(&design.censoring);
        let cens = check_censoring_identity(&design, a.n, &probes, &wq, seed)?;
        text += &report_line("censoring", &cens);
        text.push('\n');
        ok &= cens.passed();
    }
    emit(&text, None)?;
    if ok {
        Ok(())
    } else {
        Err(CliError::numerical("verification failed"))
    }
}
