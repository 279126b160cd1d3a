use std::path::Path;
use std::process::{Command, Output};

fn dyniv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyniv"))
        .current_dir(dir)
        .args(args)
        .env_remove("DYNIV_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dyniv(dir, args);
    assert!(
        out.status.success(),
        "dyniv {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    dyniv(dir, args).status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Simulated data plus an estimate in a fresh directory.
fn fitted() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--n", "300", "--censoring", "standard", "--seed", "5", "--out", "data.csv"]);
    ok(d, &["estimate", "--data", "data.csv", "--family", "weibull", "--starts", "4", "--seed", "5", "--out", "fit.json"]);
    dir
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = ok(d, &["simulate", "--n", "50", "--seed", "9"]);
    let b = ok(d, &["simulate", "--n", "50", "--seed", "9"]);
    let c = ok(d, &["simulate", "--n", "50", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().next().unwrap(), "y,delta,ztilde,dtilde,w");
    assert_eq!(a.lines().count(), 51);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let flag = ok(d, &["simulate", "--n", "20", "--seed", "33"]);
    let env = Command::new(env!("CARGO_BIN_EXE_dyniv"))
        .current_dir(d)
        .args(["simulate", "--n", "20"])
        .env("DYNIV_SEED", "33")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(env.stdout).unwrap(), flag);
}

#[test]
fn estimate_and_bootstrap_are_deterministic() {
    let dir = fitted();
    let d = dir.path();
    let first = read(d, "fit.json");
    ok(d, &["estimate", "--data", "data.csv", "--family", "weibull", "--starts", "4", "--seed", "5", "--out", "fit.json"]);
    assert_eq!(read(d, "fit.json"), first);

    let args = ["bootstrap", "--data", "data.csv", "--family", "weibull", "--B", "12", "--theta-from", "fit.json", "--seed", "5", "--out", "ci.csv"];
    let table = ok(d, &args);
    let replicates = read(d, "ci.replicates.csv");
    ok(d, &args);
    assert_eq!(read(d, "ci.csv"), table);
    assert_eq!(read(d, "ci.replicates.csv"), replicates);

    assert_eq!(table.lines().next().unwrap(), "param,estimate,lower,upper");
    assert_eq!(table.lines().count(), 5);
    assert!(replicates.starts_with("replicate,status,theta00,theta10,theta01,theta11\nestimate,weibull,"));
    assert_eq!(replicates.lines().count(), 14);
}

#[test]
fn estimate_prints_a_summary_table() {
    let dir = fitted();
    let d = dir.path();
    let out = ok(d, &["estimate", "--data", "data.csv", "--family", "weibull", "--starts", "2"]);
    let keys: Vec<&str> = out.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        keys,
        ["param", "theta00", "theta10", "theta01", "theta11", "objective", "feasible", "starts_converged"]
    );
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = fitted();
    let d = dir.path();
    assert_eq!(code(d, &["estimate", "--data", "data.csv", "--family", "gamma"]), 1);
    assert_eq!(code(d, &["simulate", "--n", "0"]), 1);
    assert_eq!(code(d, &["bootstrap", "--data", "data.csv", "--family", "weibull", "--B", "0"]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["--threads", "0", "simulate", "--n", "5"]), 1);

    std::fs::write(d.join("bad.json"), r#"{"n_starts": 2, "grid": {"m": 3}}"#).unwrap();
    let out = dyniv(d, &["estimate", "--data", "data.csv", "--family", "weibull", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));

    std::fs::write(d.join("typed.json"), r#"{"q_high": "high"}"#).unwrap();
    let out = dyniv(d, &["estimate", "--data", "data.csv", "--family", "weibull", "--config", "typed.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q_high"));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["estimate", "--data", "missing.csv", "--family", "weibull"]), 2);
    std::fs::write(d.join("bad.csv"), "y,delta,ztilde,dtilde,w\n1.0,1,2.0,1,0.5\n").unwrap();
    assert_eq!(code(d, &["estimate", "--data", "bad.csv", "--family", "weibull"]), 2);
    std::fs::write(d.join("junk.csv"), "y,delta\nx,1\n").unwrap();
    assert_eq!(code(d, &["estimate", "--data", "junk.csv", "--family", "weibull"]), 2);
}

#[test]
fn curves_with_and_without_bands() {
    let dir = fitted();
    let d = dir.path();
    let plain = ok(d, &["curves", "--theta-from", "fit.json", "--arms", "0.5,inf,diff", "--points", "10"]);
    let mut lines = plain.lines();
    assert_eq!(lines.next().unwrap(), "t,arm,value,lower,upper");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.len() == 5 && r[3].is_empty() && r[4].is_empty()));
    // before the treatment time at 0.5 that arm matches the never-treated one
    let at = |arm: &str, t: &str| rows.iter().find(|r| r[1] == arm && r[0] == t).unwrap()[2];
    assert_eq!(at("0.5", "0.2"), at("inf", "0.2"));
    assert!(at("diff", "0.2").parse::<f64>().unwrap().is_finite());

    ok(d, &["bootstrap", "--data", "data.csv", "--family", "weibull", "--B", "20", "--theta-from", "fit.json", "--out", "ci.csv"]);
    let banded = ok(d, &["curves", "--theta-from", "fit.json", "--points", "10", "--bands-from", "ci.replicates.csv", "--out", "curves.csv"]);
    assert_eq!(read(d, "curves.csv"), banded);
    for r in banded.lines().skip(1) {
        let f: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[3] <= f[4], "{r}");
    }
}

#[test]
fn curves_reject_bad_arms_and_family_mismatch() {
    let dir = fitted();
    let d = dir.path();
    assert_eq!(code(d, &["curves", "--theta-from", "fit.json", "--arms", "soon"]), 1);
    assert_eq!(code(d, &["curves", "--theta-from", "fit.json", "--arms", "-1"]), 1);
    assert_eq!(code(d, &["curves", "--theta-from", "fit.json", "--family", "lognormal"]), 1);
    assert_eq!(code(d, &["curves", "--theta-from", "nowhere.json"]), 2);
}

#[test]
fn verify_accepts_truth_and_rejects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["verify", "--family", "weibull", "--n", "200000", "--seed", "1"]);
    assert!(out.starts_with("check,max_deviation,bound,probe_1,probe_2,status\n"));
    assert_eq!(out.lines().filter(|l| l.ends_with(",pass")).count(), 2);

    let bad = dyniv(d, &["verify", "--family", "weibull", "--n", "200000", "--seed", "1", "--perturb"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("identification"));
}

#[test]
fn verify_warns_on_small_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dyniv(dir.path(), &["verify", "--family", "lognormal", "--n", "20000"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(code(dir.path(), &["verify", "--n", "100"]), 1);
}

#[test]
fn montecarlo_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("design.json"),
        r#"{"family":"weibull","theta_true":[1.0,2.0,1.5,2.0],"alpha":0.25,"beta":1.0,
            "censoring":{"scheme":"weibull_shift_exp","shift":0.3,"rate":0.5},"n":200}"#,
    )
    .unwrap();
    let out = ok(d, &["montecarlo", "--design", "design.json", "--R", "5", "--starts", "2", "--seed", "4", "--out", "mc.csv"]);
    assert_eq!(read(d, "mc.csv"), out);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "param,bias,se,cov90,cov95,cov99");
    let params: Vec<&str> = lines.by_ref().take(4).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(params, ["theta00", "theta10", "theta01", "theta11"]);
    assert!(lines.next().unwrap().contains("R=5"));

    assert_eq!(code(d, &["montecarlo", "--design", "design.json", "--R", "1"]), 1);
    std::fs::write(d.join("odd.json"), r#"{"family":"weibull","n":10,"colour":"red"}"#).unwrap();
    assert_eq!(code(d, &["montecarlo", "--design", "odd.json", "--R", "3"]), 1);
}
