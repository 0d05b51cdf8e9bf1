//! Replicated simulation experiments with MSE, coverage, length and timing
//! summaries per method.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::CiSet;
use crate::dvs::DEFAULT_MC_DRAWS;
use crate::error::{Error, Result};
use crate::lasso::{fit_pilot, CvConfig, PenaltyConfig, PilotFit};
use crate::multistep::MultistepOptions;
use crate::pipeline::{fit_clime, run_dvs, run_multistep, run_simultaneous};
use crate::rng::{streams, SeedSpec};
use crate::simgen::{simulate, CovDist, ErrDist, ModelKind, SimConfig, SimData};
use crate::subsample::poisson_subsample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dvs,
    Multistep,
    SimultaneousPlain,
    SimultaneousStudentized,
    UniScore,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dvs => "dvs",
            Method::Multistep => "multistep",
            Method::SimultaneousPlain => "simultaneous_plain",
            Method::SimultaneousStudentized => "simultaneous_studentized",
            Method::UniScore => "uni_score",
        }
    }

    /// Simultaneous methods score coverage as all coordinates at once.
    pub fn is_simultaneous(self) -> bool {
        matches!(self, Method::SimultaneousPlain | Method::SimultaneousStudentized)
    }

    /// Whether the method's output changes with the main subsample size.
    fn depends_on_r(self) -> bool {
        matches!(self, Method::Dvs | Method::UniScore)
    }
}

/// Largest tolerated share of failed replications per method.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub case: String,
    pub sim: SimConfig,
    pub methods: Vec<Method>,
    pub rp: f64,
    pub r: f64,
    pub r_grid: Option<Vec<f64>>,
    pub alpha: f64,
    pub replications: usize,
    pub r_m: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub penalties: PenaltyConfig,
    pub gamma_scale: f64,
    pub maxiter: usize,
    /// When false every `time_s` is written as 0 so that output files are
    /// byte-identical across runs.
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// A configuration with default settings for the given design.
    pub fn new(case: impl Into<String>, sim: SimConfig, methods: Vec<Method>, rp: f64, r: f64, replications: usize) -> Self {
        Self {
            case: case.into(),
            sim,
            methods,
            rp,
            r,
            r_grid: None,
            alpha: 0.05,
            replications,
            r_m: DEFAULT_MC_DRAWS,
            b: 500,
            master_seed: 0,
            threads: None,
            penalties: PenaltyConfig::default(),
            gamma_scale: crate::simultaneous::DEFAULT_GAMMA_SCALE,
            maxiter: 50,
            record_timing: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ExperimentFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let config = file.resolve()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let n = self.sim.n as f64;
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if !(self.rp > 0.0 && self.rp <= n) {
            return bad(format!("rp must lie in (0, n], got {}", self.rp));
        }
        for &r in self.r_values().iter() {
            if !(r > 0.0 && r <= n) {
                return bad(format!("r must lie in (0, n], got {r}"));
            }
        }
        if matches!(&self.r_grid, Some(g) if g.is_empty()) {
            return bad("r_grid is empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        let d = self.sim.d;
        if self.methods.contains(&Method::Dvs) {
            if d * d + 2 * d > crate::dvs::DEFAULT_DIMENSION_CAP {
                return Err(Error::DimensionCap {
                    dim: d * d + 2 * d,
                    cap: crate::dvs::DEFAULT_DIMENSION_CAP,
                    d,
                });
            }
            if self.r_m < 100 {
                return bad(format!("r_m must be at least 100, got {}", self.r_m));
            }
        }
        if self.methods.iter().any(|m| m.is_simultaneous()) && self.b < 100 {
            return bad(format!("B must be at least 100, got {}", self.b));
        }
        if self.maxiter == 0 {
            return bad("maxiter must be positive".into());
        }
        if matches!(self.threads, Some(0)) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// The main subsample sizes to evaluate.
    pub fn r_values(&self) -> Vec<f64> {
        self.r_grid.clone().unwrap_or_else(|| vec![self.r])
    }
}

/// The on-disk form: `sim` may name a preset and override single fields.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    case: Option<String>,
    sim: SimSpec,
    methods: Vec<Method>,
    #[serde(alias = "r_p")]
    rp: f64,
    r: Option<f64>,
    r_grid: Option<Vec<f64>>,
    alpha: Option<f64>,
    replications: usize,
    r_m: Option<usize>,
    #[serde(rename = "B")]
    b: Option<usize>,
    master_seed: Option<u64>,
    threads: Option<usize>,
    lambda: Option<f64>,
    tau: Option<f64>,
    cv: Option<CvConfig>,
    gamma_scale: Option<f64>,
    maxiter: Option<usize>,
    record_timing: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSpec {
    preset: Option<String>,
    model: Option<ModelKind>,
    cov_dist: Option<CovDist>,
    err_dist: Option<ErrDist>,
    n: usize,
    p: usize,
    d: usize,
    rho: Option<f64>,
    beta0: Option<Vec<f64>>,
    alpha0: Option<f64>,
    cov_scale: Option<f64>,
    noiseless: Option<bool>,
}

impl SimSpec {
    fn resolve(self) -> Result<SimConfig> {
        let mut sim = match &self.preset {
            Some(name) => SimConfig::preset(name, self.n, self.p, self.d)?,
            None => {
                let missing = |f: &str| Error::InvalidInput(format!("sim.{f} is required without a preset"));
                SimConfig {
                    model: self.model.ok_or_else(|| missing("model"))?,
                    cov_dist: self.cov_dist.ok_or_else(|| missing("cov_dist"))?,
                    err_dist: ErrDist::StdNormal,
                    n: self.n,
                    p: self.p,
                    d: self.d,
                    rho: 0.5,
                    beta0: self.beta0.clone().ok_or_else(|| missing("beta0"))?,
                    alpha0: 0.0,
                    cov_scale: 1.0,
                    noiseless: false,
                }
            }
        };
        if let Some(v) = self.model {
            sim.model = v;
        }
        if let Some(v) = self.cov_dist {
            sim.cov_dist = v;
        }
        if let Some(v) = self.err_dist {
            sim.err_dist = v;
        }
        if let Some(v) = self.rho {
            sim.rho = v;
        }
        if let Some(v) = self.beta0 {
            sim.beta0 = v;
        }
        if let Some(v) = self.alpha0 {
            sim.alpha0 = v;
        }
        if let Some(v) = self.cov_scale {
            sim.cov_scale = v;
        }
        if let Some(v) = self.noiseless {
            sim.noiseless = v;
        }
        sim.validate()?;
        Ok(sim)
    }
}

impl ExperimentFile {
    fn resolve(self) -> Result<ExperimentConfig> {
        let case = self
            .case
            .clone()
            .or_else(|| self.sim.preset.clone())
            .unwrap_or_else(|| "custom".into());
        let sim = self.sim.resolve()?;
        let r = match (self.r, &self.r_grid) {
            (Some(r), _) => r,
            (None, Some(grid)) if !grid.is_empty() => grid[0],
            _ => return Err(Error::InvalidInput("either r or r_grid is required".into())),
        };
        let mut config = ExperimentConfig::new(case, sim, self.methods, self.rp, r, self.replications);
        config.r_grid = self.r_grid;
        config.alpha = self.alpha.unwrap_or(config.alpha);
        config.r_m = self.r_m.unwrap_or(config.r_m);
        config.b = self.b.unwrap_or(config.b);
        config.master_seed = self.master_seed.unwrap_or(config.master_seed);
        config.threads = self.threads;
        config.penalties = PenaltyConfig {
            lambda: self.lambda,
            tau: self.tau,
            cv: self.cv,
        };
        config.gamma_scale = self.gamma_scale.unwrap_or(config.gamma_scale);
        config.maxiter = self.maxiter.unwrap_or(config.maxiter);
        config.record_timing = self.record_timing.unwrap_or(true);
        Ok(config)
    }
}

/// One aggregated line of output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub case: String,
    pub method: Method,
    pub d: usize,
    pub n: usize,
    pub p: usize,
    pub rp: f64,
    pub r: f64,
    pub mse: f64,
    pub time_s: f64,
    pub acp: f64,
    pub al: f64,
    /// Replications that contributed to the averages.
    pub reps: usize,
    pub failures: usize,
}

pub const CSV_HEADER: &str = "case,method,d,n,p,rp,r,mse,time_s,acp,al,reps,failures";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.case,
            row.method.name(),
            row.d,
            row.n,
            row.p,
            row.rp,
            row.r,
            row.mse,
            row.time_s,
            row.acp,
            row.al,
            row.reps,
            row.failures
        ));
    }
    out
}

/// Per-replication result of one method at one `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub sq_err: f64,
    pub coverage: f64,
    pub length: f64,
    pub time_s: f64,
}

impl Observation {
    fn from_ci(ci: &CiSet, truth: &[f64], simultaneous: bool, time_s: f64) -> Self {
        let d = truth.len() as f64;
        let sq_err = ci.estimates.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
        let covered = ci.covers(truth);
        let coverage = if simultaneous {
            f64::from(covered.iter().all(|c| *c))
        } else {
            covered.iter().filter(|c| **c).count() as f64 / d
        };
        let length = ci.lengths().iter().sum::<f64>() / d;
        Self {
            sq_err,
            coverage,
            length,
            time_s,
        }
    }
}

/// Results of one replication, indexed `[r index][method index]`.
pub type ReplicationResult = Vec<Vec<std::result::Result<Observation, String>>>;

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn start(enabled: bool) -> Self {
        Self {
            start: Instant::now(),
            enabled,
        }
    }

    fn seconds(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

/// Runs replication `j`: fresh data, pilot, then every method at every `r`.
pub fn run_replication(config: &ExperimentConfig, j: usize) -> ReplicationResult {
    let seed = config.master_seed.wrapping_add(j as u64);
    let r_values = config.r_values();
    let fail_all = |msg: String| vec![vec![Err(msg); config.methods.len()]; r_values.len()];
    let sim = match simulate(&config.sim, seed) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let clock = Clock::start(config.record_timing);
    let pilot = match fit_replication_pilot(config, &sim, seed) {
        Ok(p) => p,
        Err(e) => return fail_all(e.to_string()),
    };
    let pilot_time = clock.seconds();
    let family = config.sim.family();
    let data = &sim.data;
    let truth = &sim.theta0;
    let alpha = config.alpha;

    let mut fixed: Vec<Option<std::result::Result<Observation, String>>> = vec![None; config.methods.len()];
    let want = |m: Method| config.methods.contains(&m);
    if want(Method::Multistep) {
        let clock = Clock::start(config.record_timing);
        let opts = MultistepOptions {
            maxiter: config.maxiter,
            ..MultistepOptions::default()
        };
        let obs = run_multistep(&family, data, &pilot, alpha, &opts)
            .map(|(ci, _)| Observation::from_ci(&ci, truth, false, pilot_time + clock.seconds()))
            .map_err(|e| e.to_string());
        set(&mut fixed, config, Method::Multistep, obs);
    }
    if want(Method::SimultaneousPlain) || want(Method::SimultaneousStudentized) {
        let clock = Clock::start(config.record_timing);
        match fit_clime(&family, data, &pilot, config.gamma_scale) {
            Ok(clime) => {
                let shared = clock.seconds();
                for (method, studentized) in [
                    (Method::SimultaneousPlain, false),
                    (Method::SimultaneousStudentized, true),
                ] {
                    if !want(method) {
                        continue;
                    }
                    let clock = Clock::start(config.record_timing);
                    let obs = run_simultaneous(&family, data, &pilot, &clime, config.b, studentized, alpha, seed)
                        .map(|out| Observation::from_ci(&out.ci, truth, true, pilot_time + shared + clock.seconds()))
                        .map_err(|e| e.to_string());
                    set(&mut fixed, config, method, obs);
                }
            }
            Err(e) => {
                set(&mut fixed, config, Method::SimultaneousPlain, Err(e.to_string()));
                set(&mut fixed, config, Method::SimultaneousStudentized, Err(e.to_string()));
            }
        }
    }

    r_values
        .iter()
        .map(|&r| {
            let mut row: Vec<std::result::Result<Observation, String>> = fixed
                .iter()
                .map(|o| o.clone().unwrap_or_else(|| Err(String::new())))
                .collect();
            if want(Method::Dvs) || want(Method::UniScore) {
                let clock = Clock::start(config.record_timing);
                match run_dvs(&family, data, &pilot, r, alpha, config.r_m, seed) {
                    Ok(out) => {
                        let t = pilot_time + clock.seconds();
                        for (k, m) in config.methods.iter().enumerate() {
                            match m {
                                Method::Dvs => row[k] = Ok(Observation::from_ci(&out.dvs, truth, false, t)),
                                Method::UniScore => row[k] = Ok(Observation::from_ci(&out.uni, truth, false, t)),
                                _ => {}
                            }
                        }
                    }
                    Err(e) => {
                        for (k, m) in config.methods.iter().enumerate() {
                            if m.depends_on_r() {
                                row[k] = Err(e.to_string());
                            }
                        }
                    }
                }
            }
            row
        })
        .collect()
}

fn set(
    slots: &mut [Option<std::result::Result<Observation, String>>],
    config: &ExperimentConfig,
    method: Method,
    value: std::result::Result<Observation, String>,
) {
    if let Some(k) = config.methods.iter().position(|m| *m == method) {
        slots[k] = Some(value);
    }
}

fn fit_replication_pilot(config: &ExperimentConfig, sim: &SimData, seed: u64) -> Result<PilotFit> {
    let pilot = poisson_subsample(sim.data.n(), config.rp, SeedSpec::new(seed, streams::PILOT))?;
    fit_pilot(
        &config.sim.family(),
        &sim.data,
        pilot,
        &config.penalties,
        SeedSpec::new(seed, streams::CV_FOLDS),
    )
}

/// Every replication, in index order.
pub fn run_replications(config: &ExperimentConfig) -> Result<Vec<ReplicationResult>> {
    config.validate()?;
    let work = || -> Vec<ReplicationResult> {
        (0..config.replications)
            .into_par_iter()
            .map(|j| run_replication(config, j))
            .collect()
    };
    match config.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Averages replication results into one row per `(r, method)`.
pub fn aggregate(config: &ExperimentConfig, results: &[ReplicationResult]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for (ri, &r) in config.r_values().iter().enumerate() {
        for (mi, &method) in config.methods.iter().enumerate() {
            let obs: Vec<Observation> = results.iter().filter_map(|rep| rep[ri][mi].clone().ok()).collect();
            let k = obs.len() as f64;
            let mean = |f: fn(&Observation) -> f64| obs.iter().map(f).sum::<f64>() / k;
            rows.push(MetricsRow {
                case: config.case.clone(),
                method,
                d: config.sim.d,
                n: config.sim.n,
                p: config.sim.p,
                rp: config.rp,
                r,
                mse: mean(|o| o.sq_err),
                time_s: mean(|o| o.time_s),
                acp: mean(|o| o.coverage),
                al: mean(|o| o.length),
                reps: obs.len(),
                failures: results.len() - obs.len(),
            });
        }
    }
    rows
}

/// Errors when any method failed in more than 10% of replications.
pub fn check_failures(rows: &[MetricsRow]) -> Result<()> {
    for row in rows {
        let attempts = row.reps + row.failures;
        if row.failures as f64 > MAX_FAILURE_RATE * attempts as f64 {
            return Err(Error::TooManyFailures {
                method: row.method.name().into(),
                failures: row.failures,
                attempts,
            });
        }
    }
    Ok(())
}

/// Runs the experiment and summarizes it. Fails when a method failed in
/// more than 10% of replications.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let rows = aggregate(config, &run_replications(config)?);
    check_failures(&rows)?;
    Ok(rows)
}

/// [`run_experiment`] over every value of `r_grid`; methods that do not
/// depend on `r` are computed once per replication and repeated per row.
pub fn run_r_sweep(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    if config.r_grid.as_ref().is_none_or(|g| g.is_empty()) {
        return Err(Error::InvalidInput("sweep needs a nonempty r_grid".into()));
    }
    run_experiment(config)
}
