use subglm_core::io::{read_dataset, write_dataset, DataFormat};
use subglm_core::lasso::{fit_pilot, PenaltyConfig, PilotFit};
use subglm_core::multistep::MultistepOptions;
use subglm_core::pipeline::{fit_clime, run_dvs, run_multistep, run_simultaneous};
use subglm_core::rng::{streams, SeedSpec};
use subglm_core::simgen::{simulate, SimConfig};
use subglm_core::subsample::poisson_subsample;
use subglm_core::{CiMethod, Dataset, GlmFamily};

fn prepare(preset: &str, n: usize, p: usize, d: usize, rp: f64, seed: u64) -> (GlmFamily, Dataset, PilotFit, Vec<f64>) {
    let sim = SimConfig::preset(preset, n, p, d).unwrap();
    let out = simulate(&sim, seed).unwrap();
    let family = sim.family();
    let pilot = poisson_subsample(n, rp, SeedSpec::new(seed, streams::PILOT)).unwrap();
    let fit = fit_pilot(&family, &out.data, pilot, &PenaltyConfig::default(), SeedSpec::new(seed, streams::CV_FOLDS)).unwrap();
    (family, out.data, fit, out.theta0)
}

#[test]
fn procedures_agree_after_a_disk_round_trip() {
    let sim = SimConfig::preset("logistic-a", 4000, 20, 2).unwrap();
    let data = simulate(&sim, 3).unwrap().data;
    let dir = tempfile::tempdir().unwrap();
    let family = sim.family();
    let mut cis = Vec::new();
    for (name, format) in [("d.csv", DataFormat::Csv), ("d.bin", DataFormat::Binary)] {
        let path = dir.path().join(name);
        write_dataset(&data, &path, format).unwrap();
        let back = read_dataset(&path, 2).unwrap();
        assert_eq!(back, data);
        let pilot = poisson_subsample(back.n(), 800.0, SeedSpec::new(3, streams::PILOT)).unwrap();
        let fit = fit_pilot(&family, &back, pilot, &PenaltyConfig::default(), SeedSpec::new(3, streams::CV_FOLDS)).unwrap();
        let dvs = run_dvs(&family, &back, &fit, 800.0, 0.1, 500, 3).unwrap().dvs;
        cis.push(dvs.to_csv());
    }
    assert_eq!(cis[0], cis[1]);
}

#[test]
fn interval_methods_are_labelled_and_ordered() {
    let (family, data, fit, theta0) = prepare("linear-a", 5000, 30, 3, 800.0, 21);
    let dvs = run_dvs(&family, &data, &fit, 800.0, 0.05, 1000, 21).unwrap();
    let (ms, trace) = run_multistep(&family, &data, &fit, 0.05, &MultistepOptions::default()).unwrap();
    let clime = fit_clime(&family, &data, &fit, 0.5).unwrap();
    let plain = run_simultaneous(&family, &data, &fit, &clime, 300, false, 0.05, 21).unwrap();
    let stud = run_simultaneous(&family, &data, &fit, &clime, 300, true, 0.05, 21).unwrap();

    assert_eq!(dvs.dvs.method, CiMethod::DvsMc);
    assert_eq!(dvs.uni.method, CiMethod::UniScoreNormal);
    assert_eq!(ms.method, CiMethod::MultistepNormal);
    assert_eq!(plain.ci.method, CiMethod::SimultaneousBoot);
    assert_eq!(stud.ci.method, CiMethod::SimultaneousBootStudentized);
    assert_eq!(plain.theta_check, stud.theta_check);

    for ci in [&dvs.dvs, &dvs.uni, &ms, &plain.ci, &stud.ci] {
        assert_eq!(ci.d(), 3);
        for j in 0..3 {
            assert!(ci.lower[j] < ci.upper[j]);
            assert!((ci.estimates[j] - theta0[j]).abs() < 0.3, "{:?}", ci.method);
        }
    }
    // The one-step-corrected root narrows the plain subsample interval.
    let width = |c: &subglm_core::CiSet| c.lengths().iter().sum::<f64>();
    assert!(width(&dvs.dvs) < width(&dvs.uni));
    assert!(width(&ms) < width(&dvs.uni));
    assert!(trace.converged_at < MultistepOptions::default().maxiter);
    assert_eq!(trace.errors[0], 1.0);
}

#[test]
fn simultaneous_band_dominates_a_pointwise_level() {
    let (family, data, fit, _) = prepare("linear-a", 5000, 30, 6, 1000.0, 8);
    let clime = fit_clime(&family, &data, &fit, 0.5).unwrap();
    let out = run_simultaneous(&family, &data, &fit, &clime, 1000, true, 0.05, 8).unwrap();
    // Studentized coordinates are roughly standard normal, so the max of six
    // absolute values sits above the one-coordinate 1.96 and below the
    // Bonferroni level 2.64 plus slack.
    let q = out.quantiles.c_alpha;
    assert_eq!(q, out.quantiles.quantile(0.95));
    assert!(q > 1.96 && q < 3.0, "{q}");
    assert!(out.quantiles.quantile(0.99) >= q);
    assert!(out.quantiles.quantile(0.5) <= q);
}

#[test]
fn master_seed_controls_every_random_step() {
    let (family, data, fit, _) = prepare("linear-a", 3000, 20, 2, 600.0, 5);
    let a = run_dvs(&family, &data, &fit, 600.0, 0.05, 400, 77).unwrap();
    let b = run_dvs(&family, &data, &fit, 600.0, 0.05, 400, 77).unwrap();
    let c = run_dvs(&family, &data, &fit, 600.0, 0.05, 400, 78).unwrap();
    assert_eq!(a.dvs, b.dvs);
    assert_ne!(a.dvs, c.dvs);
}
