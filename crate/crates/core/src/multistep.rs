//! The multi-step estimator: repeated full-data score corrections with the
//! Jacobian frozen at the pilot fit.

use nalgebra::{DMatrix, DVector};

use crate::ci::{CiMethod, CiSet};
use crate::error::{Error, Result};
use crate::glm::{dot, Dataset, GlmFamily};
use crate::lasso::PilotFit;
use crate::linalg::inverse;
use crate::score::ScoreContext;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultistepOptions {
    pub maxiter: usize,
    /// Stop once `|errorₗ − errorₗ₋₁| / errorₗ₋₁` falls below this.
    /// A negative value disables the rule.
    pub rel_tol: f64,
    /// Stop once `errorₗ` falls below this.
    pub abs_tol: f64,
}

impl Default for MultistepOptions {
    fn default() -> Self {
        Self {
            maxiter: 50,
            rel_tol: 1e-3,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultistepTrace {
    /// `iterates[0]` is the pilot `θ̂ₚ`.
    pub iterates: Vec<Vec<f64>>,
    /// `errors[0] = 1`; `errors[ℓ] = ‖iterates[ℓ] − iterates[ℓ−1]‖₂`.
    pub errors: Vec<f64>,
    pub phi_p_hat: DMatrix<f64>,
    /// Index of the last iterate.
    pub converged_at: usize,
}

/// `Φ̂ₚ = (1/rₚ)Σ_{𝒦ₚ} b''(β̂ₚᵀxᵢ)(zᵢ − Ŵₚuᵢ)zᵢᵀ`.
pub fn phi_hat_pilot(family: &GlmFamily, data: &Dataset, pilot: &PilotFit) -> DMatrix<f64> {
    pilot_moment(family, data, pilot, false)
}

/// Pilot moment of `b''(β̂ₚᵀxᵢ)(zᵢ − Ŵₚuᵢ)vᵢᵀ` with `vᵢ = zᵢ`, or with
/// `vᵢ = zᵢ − Ŵₚuᵢ` when `symmetric` (then the result is symmetric bitwise).
pub(crate) fn pilot_moment(family: &GlmFamily, data: &Dataset, pilot: &PilotFit, symmetric: bool) -> DMatrix<f64> {
    let d = data.d();
    let w = &pilot.w_p;
    let mut out = DMatrix::zeros(d, d);
    let mut zt = vec![0.0; d];
    for &i in pilot.pilot.indices() {
        let (z, u) = (data.z(i), data.u(i));
        for k in 0..d {
            zt[k] = z[k] - w.row(k).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        let h = family.b2(dot(data.row(i), pilot.beta_p.beta()));
        for a in 0..d {
            let s = h * zt[a];
            if symmetric {
                for b in a..d {
                    out[(a, b)] += s * zt[b];
                }
            } else {
                for b in 0..d {
                    out[(a, b)] += s * z[b];
                }
            }
        }
    }
    if symmetric {
        for a in 0..d {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
    }
    out / pilot.pilot.r()
}

/// Iterates `θ̂ₗ = θ̂ₗ₋₁ − Φ̂ₚ⁻¹S(θ̂ₗ₋₁)` from `θ̂₀ = θ̂ₚ`, with the full-data
/// score at the pilot nuisance.
pub fn multistep_iterate(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    opts: &MultistepOptions,
) -> Result<(Vec<f64>, MultistepTrace)> {
    let phi = phi_hat_pilot(family, data, pilot);
    let ctx = ScoreContext::for_pilot(family, data, pilot)?;
    multistep_iterate_with(&ctx, pilot.beta_p.theta(), phi, opts)
}

/// The iteration for a given context, start and frozen Jacobian.
pub fn multistep_iterate_with(
    ctx: &ScoreContext<'_>,
    start: &[f64],
    phi: DMatrix<f64>,
    opts: &MultistepOptions,
) -> Result<(Vec<f64>, MultistepTrace)> {
    if opts.maxiter == 0 {
        return Err(Error::InvalidInput("maxiter must be positive".into()));
    }
    let phi_inv = inverse(&phi, "pilot Jacobian")?;
    let mut iterates = vec![start.to_vec()];
    let mut errors = vec![1.0];
    for l in 1..=opts.maxiter {
        let prev = &iterates[l - 1];
        let step: DVector<f64> = &phi_inv * ctx.score(prev, None);
        let next: Vec<f64> = prev.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
        let err = next.iter().zip(prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if !err.is_finite() {
            return Err(Error::Convergence {
                what: "multistep iteration",
                iterations: l,
                residual: err,
            });
        }
        let last = errors[l - 1];
        iterates.push(next);
        errors.push(err);
        if err < opts.abs_tol || (err - last).abs() / last < opts.rel_tol {
            break;
        }
    }
    let converged_at = iterates.len() - 1;
    let theta = iterates[converged_at].clone();
    Ok((
        theta,
        MultistepTrace {
            iterates,
            errors,
            phi_p_hat: phi,
            converged_at,
        },
    ))
}

/// Normal intervals with half-width `ρ_{1−α/2}·√(ĉ·[Φ̂ₚ⁻¹]ⱼⱼ/n)`.
pub fn multistep_confidence_intervals(
    theta: &[f64],
    phi_p_hat: &DMatrix<f64>,
    dispersion: f64,
    n: usize,
    alpha: f64,
) -> Result<CiSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let inv = inverse(phi_p_hat, "pilot Jacobian")?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half: Vec<f64> = (0..theta.len())
        .map(|j| z * (dispersion * inv[(j, j)].max(0.0) / n as f64).sqrt())
        .collect();
    Ok(CiSet::symmetric(theta.to_vec(), &half, 1.0 - alpha, CiMethod::MultistepNormal))
}
