use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn subglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subglm"))
        .args(args)
        .output()
        .expect("spawn subglm")
}

fn ok(args: &[&str]) -> String {
    let out = subglm(args);
    assert!(
        out.status.success(),
        "subglm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn simulate(dir: &Path, preset: &str) -> String {
    let path = dir.join(format!("{preset}.csv"));
    let p = path.to_str().unwrap();
    ok(&["simulate", "--preset", preset, "--n", "1500", "--p", "15", "--d", "2", "--seed", "5", "--out", p]);
    p.to_owned()
}

fn parse_ci(csv: &str) -> Vec<[f64; 3]> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("coord,estimate,lower,upper"));
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0].parse::<usize>().unwrap(), k + 1);
            [f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap()]
        })
        .collect()
}

#[test]
fn simulate_is_seeded_and_formats_round_trip() {
    let dir = TempDir::new().unwrap();
    let a = simulate(dir.path(), "linear-a");
    let again = dir.path().join("again.csv");
    ok(&["simulate", "--preset", "linear-a", "--n", "1500", "--p", "15", "--d", "2", "--seed", "5", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&again).unwrap());

    let bin = dir.path().join("data.bin");
    ok(&["simulate", "--preset", "linear-a", "--n", "1500", "--p", "15", "--d", "2", "--seed", "5", "--out", bin.to_str().unwrap()]);
    assert_eq!(&fs::read(&bin).unwrap()[..4], b"SGLM");
    let from_csv = ok(&["ci-multistep", "--data", &a, "--d", "2", "--rp", "300"]);
    let from_bin = ok(&["ci-multistep", "--data", bin.to_str().unwrap(), "--d", "2", "--rp", "300"]);
    assert_eq!(from_csv, from_bin);
}

#[test]
fn interval_commands_emit_well_formed_csv() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear-a");
    let truth = 3f64.sqrt();
    for args in [
        vec!["ci-dvs", "--r", "400", "--rm", "500"],
        vec!["ci-multistep", "--maxiter", "20"],
        vec!["ci-simultaneous", "--B", "200"],
    ] {
        let mut full = args.clone();
        full.extend(["--data", &data, "--d", "2", "--rp", "300", "--seed", "11"]);
        let rows = parse_ci(&ok(&full));
        assert_eq!(rows.len(), 2, "{args:?}");
        for [est, lo, hi] in rows {
            assert!(lo < est && est < hi, "{args:?}: {lo} {est} {hi}");
            assert!((est - truth).abs() < 0.5, "{args:?}: estimate {est}");
        }
    }
}

#[test]
fn fit_reports_pilot_quantities() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "logistic-a");
    let out = ok(&["fit", "--data", &data, "--family", "logistic", "--d", "2", "--rp", "500", "--lambda", "0.01", "--tau", "0.02"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["lambda"], 0.01);
    assert_eq!(v["tau"], 0.02);
    assert_eq!(v["dispersion_hat"], 1.0);
    assert_eq!(v["theta"].as_array().unwrap().len(), 2);
    // 15 covariates plus the intercept column.
    assert_eq!(v["beta"].as_array().unwrap().len(), 16);
    let w = v["w"].as_array().unwrap();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|row| row.as_array().unwrap().len() == 14));
}

#[test]
fn simultaneous_writes_json_sidecar() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear-a");
    let out = dir.path().join("ci.csv");
    ok(&[
        "ci-simultaneous", "--data", &data, "--d", "2", "--rp", "300", "--B", "300", "--studentized",
        "--gamma-scale", "0.7", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(parse_ci(&fs::read_to_string(&out).unwrap()).len(), 2);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ci.json")).unwrap()).unwrap();
    let gamma = side["gamma_n"].as_f64().unwrap();
    assert!(gamma >= 0.7 * (15f64.ln() / 300.0).sqrt() * 0.5);
    assert!(side["feasibility_residual"].as_f64().unwrap() <= gamma * (1.0 + 1e-9));
    assert!(side["symmetrized_residual"].as_f64().unwrap() >= 0.0);
    assert!(side["c_alpha"].as_f64().unwrap() > 0.0);
    assert_eq!(side["studentized"], true);
    assert_eq!(side["B"], 300);
}

const SMOKE: &str = r#"{
  "case": "smoke",
  "sim": { "preset": "linear-a", "n": 1500, "p": 15, "d": 2 },
  "methods": ["dvs", "multistep", "simultaneous_studentized", "uni_score"],
  "rp": 300,
  "r": 300,
  "r_m": 300,
  "B": 100,
  "replications": 6,
  "master_seed": 3
}"#;

#[test]
fn bench_output_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "smoke.json", SMOKE);
    let one = ok(&["--threads", "1", "bench", "--config", &config, "--no-timing"]);
    let four = ok(&["--threads", "4", "bench", "--config", &config, "--no-timing"]);
    assert_eq!(one, four);
    let mut lines = one.lines();
    assert_eq!(lines.next(), Some("case,method,d,n,p,rp,r,mse,time_s,acp,al,reps,failures"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').nth(8) == Some("0")));
    let reseeded = ok(&["bench", "--config", &config, "--no-timing", "--seed", "4"]);
    assert_ne!(one, reseeded);
}

#[test]
fn sweep_emits_one_row_per_r_and_method() {
    let dir = TempDir::new().unwrap();
    let body = SMOKE
        .replace(r#""r": 300,"#, r#""r_grid": [200, 400],"#)
        .replace(r#""dvs", "multistep", "simultaneous_studentized", "uni_score""#, r#""dvs", "multistep""#);
    let config = write_config(dir.path(), "sweep.json", &body);
    let out = dir.path().join("sweep.csv");
    ok(&["sweep", "--config", &config, "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    let rs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(rs, ["200", "200", "400", "400"]);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear-a");

    let missing = subglm(&["bench", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let unknown = write_config(dir.path(), "unknown.json", &SMOKE.replace(r#""rp""#, r#""bogus": 1, "rp""#));
    assert_eq!(subglm(&["bench", "--config", &unknown]).status.code(), Some(2));

    let no_grid = write_config(dir.path(), "nogrid.json", SMOKE);
    assert_eq!(subglm(&["sweep", "--config", &no_grid]).status.code(), Some(2));

    let bad_preset = subglm(&["simulate", "--preset", "linear-z", "--n", "10", "--p", "5", "--d", "1", "--out", "/dev/null"]);
    assert_eq!(bad_preset.status.code(), Some(2));

    let few_draws = subglm(&["ci-dvs", "--data", &data, "--d", "2", "--rp", "300", "--r", "300", "--rm", "10"]);
    assert_eq!(few_draws.status.code(), Some(2));

    let usage = subglm(&["ci-dvs", "--data", &data]);
    assert_eq!(usage.status.code(), Some(2));

    // A subsample of expected size one leaves the score Jacobian singular in most replications.
    let failing = write_config(
        dir.path(),
        "failing.json",
        &SMOKE
            .replace(r#""r": 300,"#, r#""r": 1,"#)
            .replace(r#""dvs", "multistep", "simultaneous_studentized", "uni_score""#, r#""dvs""#),
    );
    let out = dir.path().join("failing.csv");
    let res = subglm(&["bench", "--config", &failing, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(fs::read_to_string(&out).unwrap().starts_with("case,method"));
}
