//! Simultaneous inference over many interest coordinates: a CLIME-type
//! inverse of the pilot Hessian, the debiased estimator and the multiplier
//! bootstrap for the max statistic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::ci::{CiMethod, CiSet};
use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::lasso::PilotFit;
use crate::multistep::pilot_moment;
use crate::rng::{streams, SeedSpec};
use crate::score::ScoreContext;
use crate::simplex::{solve_lp, LpOutcome};
use crate::stats::{order_statistic, sort_floats};

pub const DEFAULT_GAMMA_SCALE: f64 = 0.5;
/// How many times an infeasible `γₙ` is doubled before giving up.
pub const MAX_GAMMA_DOUBLINGS: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct ClimeSolution {
    /// Symmetrized solution.
    #[serde(skip)]
    pub g: DMatrix<f64>,
    /// Row-wise LP solutions before symmetrization.
    #[serde(skip)]
    pub row_solutions: DMatrix<f64>,
    pub gamma_n: f64,
    /// `‖ĜΦ̌ − I‖∞` of the row-wise solution before symmetrization.
    pub feasibility_residual: f64,
    /// The same residual after symmetrization.
    pub symmetrized_residual: f64,
    pub row_l1: Vec<f64>,
    /// Number of times `γₙ` was doubled to reach feasibility.
    pub gamma_doublings: usize,
}

#[derive(Debug, Clone)]
pub struct BootstrapQuantiles {
    /// Max statistics, sorted ascending.
    pub draws: Vec<f64>,
    pub c_alpha: f64,
    pub alpha: f64,
    pub studentized: bool,
    pub b: usize,
}

impl BootstrapQuantiles {
    /// `c_n(level)` from the stored draws.
    pub fn quantile(&self, level: f64) -> f64 {
        order_statistic(&self.draws, level)
    }
}

/// `Φ̌ₚ = (1/rₚ)Σ_{𝒦ₚ} b''(β̂ₚᵀxᵢ)(zᵢ − Ŵₚuᵢ)(zᵢ − Ŵₚuᵢ)ᵀ`.
pub fn phi_check_pilot(family: &GlmFamily, data: &Dataset, pilot: &PilotFit) -> DMatrix<f64> {
    pilot_moment(family, data, pilot, true)
}

fn max_abs_residual(g: &DMatrix<f64>, phi: &DMatrix<f64>) -> f64 {
    let prod = g * phi;
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    worst
}

/// Row `i`: `min ‖g‖₁` s.t. `‖Φg − eᵢ‖∞ ≤ γ`, as an LP in `(g⁺, g⁻)`.
fn clime_row(phi: &DMatrix<f64>, i: usize, gamma: f64) -> Result<Vec<f64>> {
    let d = phi.nrows();
    let mut a = Vec::with_capacity(2 * d);
    let mut b = Vec::with_capacity(2 * d);
    for k in 0..d {
        let e = if k == i { 1.0 } else { 0.0 };
        let row: Vec<f64> = (0..d).map(|j| phi[(k, j)]).collect();
        a.push(row.iter().copied().chain(row.iter().map(|v| -v)).collect::<Vec<_>>());
        b.push(gamma + e);
        a.push(row.iter().map(|v| -v).chain(row.iter().copied()).collect::<Vec<_>>());
        b.push(gamma - e);
    }
    match solve_lp(&vec![1.0; 2 * d], &a, &b) {
        LpOutcome::Optimal { x, .. } => Ok((0..d).map(|j| x[j] - x[d + j]).collect()),
        LpOutcome::Infeasible => Err(Error::Infeasible { row: i, gamma }),
        LpOutcome::Unbounded => unreachable!("ℓ1 objective is bounded below"),
    }
}

/// `g̃ᵢⱼ` keeps the smaller-magnitude of `ĝᵢⱼ` and `ĝⱼᵢ`; on a magnitude
/// tie the entry from the lower row index wins, so the result is symmetric.
fn symmetrize(g: &DMatrix<f64>) -> DMatrix<f64> {
    let d = g.nrows();
    let mut out = g.clone();
    for i in 0..d {
        for j in i + 1..d {
            let (a, b) = (g[(i, j)], g[(j, i)]);
            let v = if b.abs() < a.abs() { b } else { a };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Row-wise CLIME at a fixed `γₙ`, then symmetrized.
pub fn clime_solve(phi_check: &DMatrix<f64>, gamma_n: f64) -> Result<ClimeSolution> {
    let d = phi_check.nrows();
    if phi_check.ncols() != d {
        return Err(Error::InvalidInput("Φ̌ must be square".into()));
    }
    if !(gamma_n >= 0.0) {
        return Err(Error::InvalidInput(format!("γₙ must be non-negative, got {gamma_n}")));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..d).into_par_iter().map(|i| clime_row(phi_check, i, gamma_n)).collect();
    let mut raw = DMatrix::zeros(d, d);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            raw[(i, j)] = v;
        }
    }
    let g = symmetrize(&raw);
    let row_l1 = (0..d).map(|i| g.row(i).iter().map(|v| v.abs()).sum()).collect();
    Ok(ClimeSolution {
        feasibility_residual: max_abs_residual(&raw, phi_check),
        symmetrized_residual: max_abs_residual(&g, phi_check),
        g,
        row_solutions: raw,
        gamma_n,
        row_l1,
        gamma_doublings: 0,
    })
}

/// CLIME at `γₙ = scale·√(log p / rₚ)`, doubling `γₙ` while infeasible.
pub fn clime_solve_adaptive(phi_check: &DMatrix<f64>, p: usize, rp: f64, scale: f64) -> Result<ClimeSolution> {
    let mut gamma = scale * ((p as f64).ln() / rp).sqrt();
    let mut last = None;
    for doublings in 0..=MAX_GAMMA_DOUBLINGS {
        match clime_solve(phi_check, gamma) {
            Ok(sol) => return Ok(ClimeSolution { gamma_doublings: doublings, ..sol }),
            Err(e @ Error::Infeasible { .. }) => {
                last = Some(e);
                gamma *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `θ̌ = θ̂ₚ − Ĝ·S(θ̂ₚ)` with the full-data score at the pilot nuisance.
pub fn debiased_estimate(family: &GlmFamily, data: &Dataset, pilot: &PilotFit, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ctx = ScoreContext::for_pilot(family, data, pilot)?;
    Ok(debiased_estimate_with(&ctx, pilot.beta_p.theta(), g))
}

pub fn debiased_estimate_with(ctx: &ScoreContext<'_>, theta_p: &[f64], g: &DMatrix<f64>) -> Vec<f64> {
    let step = g * ctx.score(theta_p, None);
    theta_p.iter().zip(step.iter()).map(|(t, s)| t - s).collect()
}

/// Multiplier bootstrap of `‖n^{-1/2}Σ eᵢaᵢ‖∞` with `aᵢ = Ĝ(b'(β̂ₚᵀxᵢ) − yᵢ)(zᵢ − Ŵₚuᵢ)`,
/// optionally scaled by `diag(Ĝ)^{-1/2}`.
pub fn multiplier_bootstrap(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    g: &DMatrix<f64>,
    b: usize,
    studentized: bool,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapQuantiles> {
    let ctx = ScoreContext::for_pilot(family, data, pilot)?;
    let theta = pilot.beta_p.theta();
    let n = data.n();
    let contributions: Vec<f64> = (0..n)
        .map(|i| family.b1(ctx.eta(i, theta)) - data.y()[i])
        .collect();
    let directions: Vec<&[f64]> = (0..n).map(|i| ctx.design.ztilde(i)).collect();
    bootstrap_from_contributions(&contributions, &directions, g, b, studentized, alpha, seed)
}

/// The bootstrap given scalar residuals `ρᵢ` and directions `z̃ᵢ`, so that
/// `aᵢ = Ĝρᵢz̃ᵢ`. Draw `k` reads its multipliers from stream `1000 + k`.
pub fn bootstrap_from_contributions(
    residuals: &[f64],
    directions: &[&[f64]],
    g: &DMatrix<f64>,
    b: usize,
    studentized: bool,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapQuantiles> {
    if b < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 bootstrap draws, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d = g.nrows();
    let scale: Vec<f64> = if studentized {
        (0..d)
            .map(|j| {
                let v = g[(j, j)];
                if v > 0.0 {
                    Ok(1.0 / v.sqrt())
                } else {
                    Err(Error::InvalidStudentization { coord: j, value: v })
                }
            })
            .collect::<Result<_>>()?
    } else {
        vec![1.0; d]
    };
    let n = residuals.len();
    let root_n = (n as f64).sqrt();
    let mut draws: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = SeedSpec::new(seed, streams::BOOTSTRAP_BASE + k as u64).rng();
            let mut acc = DVector::zeros(d);
            for i in 0..n {
                let e: f64 = rng.sample(StandardNormal);
                let s = e * residuals[i];
                for (a, z) in acc.iter_mut().zip(directions[i]) {
                    *a += s * z;
                }
            }
            let q = g * acc / root_n;
            q.iter().zip(&scale).fold(0.0f64, |m, (v, s)| m.max((v * s).abs()))
        })
        .collect();
    sort_floats(&mut draws);
    Ok(BootstrapQuantiles {
        c_alpha: order_statistic(&draws, 1.0 - alpha),
        draws,
        alpha,
        studentized,
        b,
    })
}

/// Plain: `θ̌ᵢ ± c/√n`. Studentized: `θ̌ᵢ ± ĝᵢᵢ^{1/2}c/√n`.
pub fn simultaneous_confidence_intervals(
    theta_check: &[f64],
    quantiles: &BootstrapQuantiles,
    g: &DMatrix<f64>,
    n: usize,
) -> CiSet {
    let root_n = (n as f64).sqrt();
    let half: Vec<f64> = (0..theta_check.len())
        .map(|j| {
            if quantiles.studentized {
                g[(j, j)].sqrt() * quantiles.c_alpha / root_n
            } else {
                quantiles.c_alpha / root_n
            }
        })
        .collect();
    let method = if quantiles.studentized {
        CiMethod::SimultaneousBootStudentized
    } else {
        CiMethod::SimultaneousBoot
    };
    CiSet::symmetric(theta_check.to_vec(), &half, 1.0 - quantiles.alpha, method)
}
