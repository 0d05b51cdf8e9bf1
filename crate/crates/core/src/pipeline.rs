//! End-to-end inference procedures on a fitted pilot, shared by the
//! command-line tool and the experiment harness.

use nalgebra::DMatrix;

use crate::ci::{CiMethod, CiSet};
use crate::dvs::{dvs_confidence_intervals, dvs_fit, estimate_asymptotic_model, phi_tilde, DvsEstimate};
use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::lasso::PilotFit;
use crate::linalg::inverse;
use crate::multistep::{multistep_confidence_intervals, multistep_iterate, MultistepOptions, MultistepTrace};
use crate::rng::{streams, SeedSpec};
use crate::score::ScoreContext;
use crate::simultaneous::{
    clime_solve_adaptive, debiased_estimate, multiplier_bootstrap, phi_check_pilot, simultaneous_confidence_intervals,
    BootstrapQuantiles, ClimeSolution,
};
use crate::stats::normal_quantile;
use crate::subsample::poisson_subsample;

/// Subsampled score root, its DVS correction, and intervals for both.
#[derive(Debug, Clone)]
pub struct DvsOutcome {
    pub estimate: DvsEstimate,
    pub dvs: CiSet,
    /// Normal intervals around the plain root with variance `ĉΦ̃⁻¹/r`.
    pub uni: CiSet,
}

/// Draws the main subsample (stream `main` of `master_seed`) and runs the DVS
/// procedure. Monte-Carlo draws use stream `monte_carlo`.
pub fn run_dvs(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    r: f64,
    alpha: f64,
    r_m: usize,
    master_seed: u64,
) -> Result<DvsOutcome> {
    let ctx = ScoreContext::for_pilot(family, data, pilot)?;
    let sub = poisson_subsample(data.n(), r, SeedSpec::new(master_seed, streams::MAIN))?;
    let estimate = dvs_fit(&ctx, &sub, pilot.beta_p.theta())?;
    let model = estimate_asymptotic_model(family, data, pilot, &estimate.theta_dvs, r, data.n())?;
    let dvs = dvs_confidence_intervals(
        &model,
        &estimate.theta_dvs,
        alpha,
        r_m,
        SeedSpec::new(master_seed, streams::MONTE_CARLO),
    )?;
    let uni = uni_score_intervals(family, data, pilot, &estimate.theta_uni, r, alpha)?;
    Ok(DvsOutcome { estimate, dvs, uni })
}

/// `θ_uni ± ρ_{1−α/2}·√(ĉ[Φ̃⁻¹]ⱼⱼ/r)` with `Φ̃` evaluated at `θ_uni`.
pub fn uni_score_intervals(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    theta_uni: &[f64],
    r: f64,
    alpha: f64,
) -> Result<CiSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let inv = inverse(&phi_tilde(family, data, pilot, theta_uni), "Φ estimate")?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half: Vec<f64> = (0..theta_uni.len())
        .map(|j| z * (pilot.dispersion_hat * inv[(j, j)].max(0.0) / r).sqrt())
        .collect();
    Ok(CiSet::symmetric(theta_uni.to_vec(), &half, 1.0 - alpha, CiMethod::UniScoreNormal))
}

pub fn run_multistep(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    alpha: f64,
    opts: &MultistepOptions,
) -> Result<(CiSet, MultistepTrace)> {
    let (theta, trace) = multistep_iterate(family, data, pilot, opts)?;
    let ci = multistep_confidence_intervals(&theta, &trace.phi_p_hat, pilot.dispersion_hat, data.n(), alpha)?;
    Ok((ci, trace))
}

#[derive(Debug, Clone)]
pub struct SimultaneousOutcome {
    pub clime: ClimeSolution,
    pub theta_check: Vec<f64>,
    pub quantiles: BootstrapQuantiles,
    pub ci: CiSet,
}

/// CLIME inverse of `Φ̌ₚ`, shared by the plain and studentized bootstraps.
pub fn fit_clime(family: &GlmFamily, data: &Dataset, pilot: &PilotFit, gamma_scale: f64) -> Result<ClimeSolution> {
    let phi = phi_check_pilot(family, data, pilot);
    clime_solve_adaptive(&phi, data.p(), pilot.pilot.r(), gamma_scale)
}

/// Debiased estimate and bootstrap intervals given a CLIME solution.
/// Bootstrap draw `k` uses stream `1000 + k` of `master_seed`.
pub fn run_simultaneous(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    clime: &ClimeSolution,
    b: usize,
    studentized: bool,
    alpha: f64,
    master_seed: u64,
) -> Result<SimultaneousOutcome> {
    let g: &DMatrix<f64> = &clime.g;
    let theta_check = debiased_estimate(family, data, pilot, g)?;
    let quantiles = multiplier_bootstrap(family, data, pilot, g, b, studentized, alpha, master_seed)?;
    let ci = simultaneous_confidence_intervals(&theta_check, &quantiles, g, data.n());
    Ok(SimultaneousOutcome {
        clime: clime.clone(),
        theta_check,
        quantiles,
        ci,
    })
}
