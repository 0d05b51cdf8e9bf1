use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use subglm_core::experiment::{aggregate, check_failures, metrics_csv, run_replications, ExperimentConfig};
use subglm_core::io::{read_dataset, write_dataset, DataFormat};
use subglm_core::lasso::{fit_pilot, CvConfig, PenaltyConfig, PilotFit};
use subglm_core::multistep::MultistepOptions;
use subglm_core::pipeline::{fit_clime, run_dvs, run_multistep, run_simultaneous};
use subglm_core::rng::{streams, SeedSpec};
use subglm_core::simgen::{simulate, SimConfig};
use subglm_core::subsample::poisson_subsample;
use subglm_core::{CiSet, Dataset, Error, FamilyKind, GlmFamily};

const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURES: u8 = 3;

#[derive(Parser)]
#[command(name = "subglm", version, about = "Subsampled inference for high-dimensional GLMs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit the pilot estimates and print them as JSON.
    Fit(FitArgs),
    /// DVS estimate with Monte-Carlo intervals.
    CiDvs(DvsArgs),
    /// Multi-step estimate with normal intervals.
    CiMultistep(MultistepArgs),
    /// Debiased estimate with bootstrap simultaneous intervals.
    CiSimultaneous(SimultaneousArgs),
    /// Run a replicated experiment from a JSON config.
    Bench(ExperimentArgs),
    /// Run an experiment over the config's `r_grid`.
    Sweep(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment JSON whose `sim` block describes the design.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of linear-a|b|c|d, logistic-a|b.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Gaussian,
    Logistic,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file (.csv, or .bin/.sglm for the binary layout).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    /// Number of leading columns under inference.
    #[arg(long)]
    d: usize,
    /// Expected pilot subsample size.
    #[arg(long)]
    rp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Choose unset penalties by K-fold cross-validation.
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long, default_value_t = 10)]
    cv_grid: usize,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct DvsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Expected main subsample size.
    #[arg(long)]
    r: f64,
    /// Monte-Carlo draws.
    #[arg(long, default_value_t = 10_000)]
    rm: usize,
}

#[derive(Args)]
struct MultistepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 50)]
    maxiter: usize,
}

#[derive(Args)]
struct SimultaneousArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap draws.
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma_scale: f64,
    #[arg(long)]
    studentized: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Write 0 for every `time_s` so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

/// Errors that map to the configuration exit code.
fn is_config_error(e: &anyhow::Error) -> bool {
    if e.downcast_ref::<ConfigError>().is_some() {
        return true;
    }
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::InvalidInput(_) | Error::Parse(_) | Error::DimensionCap { .. })
    )
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::CiDvs(a) => cmd_dvs(a),
        Command::CiMultistep(a) => cmd_multistep(a),
        Command::CiSimultaneous(a) => cmd_simultaneous(a),
        Command::Bench(a) => cmd_experiment(a, false, cli.threads),
        Command::Sweep(a) => cmd_experiment(a, true, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::TooManyFailures { .. })) {
                ExitCode::from(EXIT_FAILURES)
            } else if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let base = match &a.config {
        Some(path) => Some(read_config(path)?.sim),
        None => None,
    };
    let sim = match (&a.preset, base) {
        (Some(name), base) => {
            let pick = |flag: Option<usize>, from: Option<usize>, what: &str| {
                flag.or(from).ok_or_else(|| config_error(format!("--{what} is required with --preset")))
            };
            let n = pick(a.n, base.as_ref().map(|b| b.n), "n")?;
            let p = pick(a.p, base.as_ref().map(|b| b.p), "p")?;
            let d = pick(a.d, base.as_ref().map(|b| b.d), "d")?;
            SimConfig::preset(name, n, p, d)?
        }
        (None, Some(mut sim)) => {
            if a.n.is_some() || a.p.is_some() {
                return Err(config_error("--n and --p need --preset (beta0 depends on p)"));
            }
            if let Some(d) = a.d {
                sim.d = d;
                sim.validate()?;
            }
            sim
        }
        (None, None) => return Err(config_error("either --preset or --config is required")),
    };
    let data = simulate(&sim, a.seed)?.data;
    let format = match a.format {
        Some(Format::Csv) => DataFormat::Csv,
        Some(Format::Binary) => DataFormat::Binary,
        None => DataFormat::from_path(&a.out),
    };
    write_dataset(&data, &a.out, format)?;
    Ok(())
}

fn family(f: Family) -> GlmFamily {
    GlmFamily::from_kind(match f {
        Family::Gaussian => FamilyKind::Gaussian,
        Family::Logistic => FamilyKind::Logistic,
    })
}

fn load_and_fit(a: &DataArgs) -> anyhow::Result<(GlmFamily, Dataset, PilotFit)> {
    let data = read_dataset(&a.data, a.d).with_context(|| format!("reading {}", a.data.display()))?;
    let fam = family(a.family);
    let pilot = poisson_subsample(data.n(), a.rp, SeedSpec::new(a.seed, streams::PILOT))?;
    let penalties = PenaltyConfig {
        lambda: a.lambda,
        tau: a.tau,
        cv: a.cv_folds.map(|folds| CvConfig {
            grid_size: a.cv_grid,
            folds,
        }),
    };
    let fit = fit_pilot(&fam, &data, pilot, &penalties, SeedSpec::new(a.seed, streams::CV_FOLDS))?;
    Ok((fam, data, fit))
}

#[derive(Serialize)]
struct PilotReport<'a> {
    lambda: f64,
    tau: f64,
    dispersion_hat: f64,
    pilot_size: usize,
    theta: &'a [f64],
    beta: &'a [f64],
    w: Vec<Vec<f64>>,
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<()> {
    let (_, _, fit) = load_and_fit(&a.data)?;
    let report = PilotReport {
        lambda: fit.lambda,
        tau: fit.tau,
        dispersion_hat: fit.dispersion_hat,
        pilot_size: fit.pilot.len(),
        theta: fit.beta_p.theta(),
        beta: fit.beta_p.beta(),
        w: fit.w_p.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    emit(a.data.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn emit_ci(out: Option<&Path>, ci: &CiSet) -> anyhow::Result<()> {
    emit(out, &ci.to_csv())
}

fn cmd_dvs(a: DvsArgs) -> anyhow::Result<()> {
    let (fam, data, pilot) = load_and_fit(&a.data)?;
    let out = run_dvs(&fam, &data, &pilot, a.r, a.alpha, a.rm, a.data.seed)?;
    emit_ci(a.data.out.as_deref(), &out.dvs)
}

fn cmd_multistep(a: MultistepArgs) -> anyhow::Result<()> {
    let (fam, data, pilot) = load_and_fit(&a.data)?;
    let opts = MultistepOptions {
        maxiter: a.maxiter,
        ..MultistepOptions::default()
    };
    let (ci, _) = run_multistep(&fam, &data, &pilot, a.alpha, &opts)?;
    emit_ci(a.data.out.as_deref(), &ci)
}

#[derive(Serialize)]
struct SimultaneousSidecar {
    gamma_n: f64,
    gamma_doublings: usize,
    feasibility_residual: f64,
    symmetrized_residual: f64,
    c_alpha: f64,
    alpha: f64,
    studentized: bool,
    #[serde(rename = "B")]
    b: usize,
}

fn cmd_simultaneous(a: SimultaneousArgs) -> anyhow::Result<()> {
    let (fam, data, pilot) = load_and_fit(&a.data)?;
    let clime = fit_clime(&fam, &data, &pilot, a.gamma_scale)?;
    let out = run_simultaneous(&fam, &data, &pilot, &clime, a.b, a.studentized, a.alpha, a.data.seed)?;
    emit_ci(a.data.out.as_deref(), &out.ci)?;
    let sidecar = SimultaneousSidecar {
        gamma_n: clime.gamma_n,
        gamma_doublings: clime.gamma_doublings,
        feasibility_residual: clime.feasibility_residual,
        symmetrized_residual: clime.symmetrized_residual,
        c_alpha: out.quantiles.c_alpha,
        alpha: a.alpha,
        studentized: a.studentized,
        b: a.b,
    };
    let json = serde_json::to_string_pretty(&sidecar)? + "\n";
    match &a.data.out {
        Some(path) => {
            let side = path.with_extension("json");
            fs::write(&side, json).with_context(|| format!("writing {}", side.display()))
        }
        None => {
            eprint!("{json}");
            Ok(())
        }
    }
}

fn cmd_experiment(a: ExperimentArgs, sweep: bool, threads: Option<usize>) -> anyhow::Result<()> {
    let mut config = read_config(&a.config)?;
    if let Some(seed) = a.seed {
        config.master_seed = seed;
    }
    if threads.is_some() {
        config.threads = threads;
    }
    if a.no_timing {
        config.record_timing = false;
    }
    if sweep && config.r_grid.as_ref().is_none_or(|g| g.is_empty()) {
        return Err(config_error("sweep needs a nonempty r_grid in the config"));
    }
    let rows = aggregate(&config, &run_replications(&config)?);
    emit(a.out.as_deref(), &metrics_csv(&rows))?;
    check_failures(&rows)?;
    Ok(())
}
