use dyniv::inference::{bootstrap_from, IdentityResampler, UniformResampler};
use dyniv::{bootstrap, estimate, gen_dataset, BootstrapResult, ModelFamily, SimDesign, SolverConfig};

fn config() -> SolverConfig {
    SolverConfig {
        n_starts: 4,
        grid_m: 40,
        ..SolverConfig::default()
    }
}

#[test]
fn identity_resampling_returns_the_estimate() {
    let ds = gen_dataset(&SimDesign::standard(ModelFamily::Weibull, true, 400), 3).unwrap().dataset;
    let fit = estimate(&ds, ModelFamily::Weibull, &config()).unwrap();
    let boot = bootstrap_from(&ds, ModelFamily::Weibull, &config(), &fit.theta_hat, 3, 1, &IdentityResampler).unwrap();
    assert_eq!(boot.failed(), 0);
    for rep in boot.successful() {
        for (a, b) in rep.to_array().iter().zip(fit.theta_hat.to_array()) {
            assert!((a - b).abs() < 1e-4, "{rep:?} vs {:?}", fit.theta_hat);
        }
    }
}

#[test]
fn bootstrap_is_reproducible_and_round_trips() {
    let ds = gen_dataset(&SimDesign::standard(ModelFamily::LogNormal, true, 300), 8).unwrap().dataset;
    let a = bootstrap(&ds, ModelFamily::LogNormal, &config(), 16, 21).unwrap();
    let b = bootstrap(&ds, ModelFamily::LogNormal, &config(), 16, 21).unwrap();
    assert_eq!(a, b);
    let c = bootstrap_from(&ds, ModelFamily::LogNormal, &config(), &a.theta_hat, 16, 22, &UniformResampler).unwrap();
    assert_ne!(a.replicates, c.replicates);

    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    assert_eq!(BootstrapResult::read_csv(&buf[..]).unwrap(), a);

    let ci = a.intervals(0.025, 0.975).unwrap();
    for (lo, hi) in ci {
        assert!(lo <= hi);
    }
}

#[test]
fn zero_replicates_is_an_error() {
    let ds = gen_dataset(&SimDesign::standard(ModelFamily::Weibull, false, 50), 1).unwrap().dataset;
    assert!(bootstrap(&ds, ModelFamily::Weibull, &config(), 0, 0).is_err());
}
