//! Pilot estimation: the penalized GLM fit, the penalized decorrelation
//! matrix, the dispersion estimate and penalty selection.
//!
//! Every fit is cyclic coordinate descent on a weighted least-squares
//! objective. Logistic fits wrap it in a proximal-Newton (IRLS) outer loop
//! with step halving on the penalized objective.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{dot, Dataset, FamilyKind, GlmFamily, ParamSplit};
use crate::rng::{streams, SeedSpec};
use crate::subsample::SubsampleIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Cap on coordinate-descent sweeps, summed over IRLS passes.
    pub max_sweeps: usize,
    /// Largest coordinate change accepted as converged.
    pub coef_tol: f64,
    /// Largest KKT violation accepted as converged.
    pub kkt_tol: f64,
    /// Floor applied to `b''` weights.
    pub weight_floor: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            coef_tol: 1e-9,
            kkt_tol: 1e-7,
            weight_floor: 1e-10,
        }
    }
}

/// Output of a single penalized regression.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
    /// Penalized objective after every coordinate sweep of the final
    /// weighted least-squares pass.
    pub objective_trace: Vec<f64>,
}

/// Selected rows of a column subset, stored column-major.
struct Columns {
    m: usize,
    data: Vec<f64>,
}

impl Columns {
    fn gather(data: &Dataset, rows: &[usize], cols: std::ops::Range<usize>) -> Self {
        let m = rows.len();
        let mut out = vec![0.0; m * cols.len()];
        for (k, &i) in rows.iter().enumerate() {
            let row = data.row(i);
            for (jj, j) in cols.clone().enumerate() {
                out[jj * m + k] = row[j];
            }
        }
        Self { m, data: out }
    }

    fn k(&self) -> usize {
        self.data.len().checked_div(self.m).unwrap_or(0)
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    fn times(&self, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (j, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(self.col(j)) {
                    *o += c * x;
                }
            }
        }
        out
    }
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the lasso optimality conditions given a gradient.
fn kkt_violation(grad: &[f64], coef: &[f64], penalty: f64) -> f64 {
    grad.iter()
        .zip(coef)
        .map(|(&g, &c)| {
            if c != 0.0 {
                (g + penalty * c.signum()).abs()
            } else {
                (g.abs() - penalty).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `(scale/2)·Σ wᵢ(tᵢ − xᵢᵀa)² + penalty·‖a‖₁` by cyclic
/// coordinate descent with active-set passes. `budget` counts sweeps.
fn weighted_lasso_cd(
    cols: &Columns,
    target: &[f64],
    weights: &[f64],
    scale: f64,
    penalty: f64,
    init: Vec<f64>,
    opts: &LassoOptions,
    kkt_tol: f64,
    budget: &mut usize,
) -> Result<LassoFit> {
    let k = cols.k();
    let m = cols.m;
    let mut coef = init;
    let wx: Vec<f64> = (0..k)
        .flat_map(|j| cols.col(j).iter().zip(weights).map(|(x, w)| x * w))
        .collect();
    let curvature: Vec<f64> = (0..k)
        .map(|j| scale * dot(&wx[j * m..(j + 1) * m], cols.col(j)))
        .collect();
    let fresh_residual = |coef: &[f64]| -> Vec<f64> {
        let fitted = cols.times(coef);
        target.iter().zip(&fitted).map(|(t, f)| t - f).collect()
    };
    let objective = |res: &[f64], coef: &[f64]| -> f64 {
        0.5 * scale * res.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>()
            + penalty * coef.iter().map(|c| c.abs()).sum::<f64>()
    };
    let mut res = fresh_residual(&coef);
    let mut trace = Vec::new();
    let mut sweeps = 0usize;

    let sweep = |coef: &mut Vec<f64>, res: &mut Vec<f64>, active_only: bool| -> f64 {
        let mut max_change = 0.0f64;
        for j in 0..k {
            let aj = coef[j];
            if active_only && aj == 0.0 {
                continue;
            }
            let a = curvature[j];
            if a <= 0.0 {
                coef[j] = 0.0;
                continue;
            }
            let z = a * aj + scale * dot(&wx[j * m..(j + 1) * m], res);
            let new = soft_threshold(z, penalty) / a;
            if new != aj {
                let delta = new - aj;
                for (r, x) in res.iter_mut().zip(cols.col(j)) {
                    *r -= delta * x;
                }
                coef[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };

    loop {
        let change = sweep(&mut coef, &mut res, false);
        sweeps += 1;
        trace.push(objective(&res, &coef));
        if change < opts.coef_tol {
            res = fresh_residual(&coef);
            let grad: Vec<f64> = (0..k)
                .map(|j| -scale * dot(&wx[j * m..(j + 1) * m], &res))
                .collect();
            let kkt = kkt_violation(&grad, &coef, penalty);
            if kkt <= kkt_tol {
                *budget = budget.saturating_sub(sweeps);
                return Ok(LassoFit {
                    coef,
                    sweeps,
                    kkt_residual: kkt,
                    objective_trace: trace,
                });
            }
        } else {
            loop {
                let change = sweep(&mut coef, &mut res, true);
                sweeps += 1;
                trace.push(objective(&res, &coef));
                if change < opts.coef_tol || sweeps >= *budget {
                    break;
                }
            }
        }
        if sweeps >= *budget {
            res = fresh_residual(&coef);
            let grad: Vec<f64> = (0..k)
                .map(|j| -scale * dot(&wx[j * m..(j + 1) * m], &res))
                .collect();
            return Err(Error::Convergence {
                what: "coordinate descent",
                iterations: sweeps,
                residual: kkt_violation(&grad, &coef, penalty),
            });
        }
    }
}

fn expected_size(pilot: &SubsampleIndex) -> f64 {
    pilot.r()
}

/// Gradient of `(1/rₚ)Σ[b(xᵢᵀβ) − yᵢxᵢᵀβ]` over the pilot.
pub fn glm_gradient(family: &GlmFamily, data: &Dataset, pilot: &SubsampleIndex, beta: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; data.p()];
    for &i in pilot.indices() {
        let row = data.row(i);
        let g = family.b1(dot(row, beta)) - data.y()[i];
        for (o, x) in grad.iter_mut().zip(row) {
            *o += g * x;
        }
    }
    let norm = expected_size(pilot);
    grad.iter_mut().for_each(|g| *g /= norm);
    grad
}

/// KKT violation of `beta` for the penalized GLM objective at level `lambda`.
pub fn lasso_kkt_residual(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    beta: &[f64],
    lambda: f64,
) -> f64 {
    kkt_violation(&glm_gradient(family, data, pilot, beta), beta, lambda)
}

/// `λ_max = ‖∇l(0)‖∞`, the smallest penalty with an all-zero solution.
pub fn lambda_max(family: &GlmFamily, data: &Dataset, pilot: &SubsampleIndex) -> f64 {
    let zero = vec![0.0; data.p()];
    glm_gradient(family, data, pilot, &zero)
        .into_iter()
        .fold(0.0, |m, g| m.max(g.abs()))
}

fn penalized_objective(family: &GlmFamily, data: &Dataset, pilot: &SubsampleIndex, beta: &[f64], lambda: f64) -> f64 {
    let loss: f64 = pilot
        .indices()
        .iter()
        .map(|&i| {
            let eta = data.linear_predictor(i, beta);
            family.b(eta) - data.y()[i] * eta
        })
        .sum();
    loss / expected_size(pilot) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Penalized GLM fit over the pilot subsample, returning solver diagnostics.
pub fn fit_lasso_glm_with(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    lambda: f64,
    init: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    pilot.require_nonempty("lasso fit")?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("penalty must be non-negative, got {lambda}")));
    }
    let p = data.p();
    let norm = expected_size(pilot);
    let cols = Columns::gather(data, pilot.indices(), 0..p);
    let y: Vec<f64> = pilot.indices().iter().map(|&i| data.y()[i]).collect();
    let start = init.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let mut budget = opts.max_sweeps;

    match family.kind {
        FamilyKind::Gaussian => {
            let ones = vec![1.0; y.len()];
            let fit = weighted_lasso_cd(&cols, &y, &ones, 1.0 / norm, lambda, start, opts, opts.kkt_tol, &mut budget)?;
            let total = opts.max_sweeps - budget;
            Ok(LassoFit { sweeps: total, ..fit })
        }
        FamilyKind::Logistic => {
            let mut beta = start;
            let mut last_step = f64::INFINITY;
            let mut trace = Vec::new();
            let mut outer = 0usize;
            loop {
                let eta = cols.times(&beta);
                let resid: Vec<f64> = eta.iter().zip(&y).map(|(e, y)| family.b1(*e) - y).collect();
                let grad: Vec<f64> = (0..p).map(|j| dot(cols.col(j), &resid) / norm).collect();
                let kkt = kkt_violation(&grad, &beta, lambda);
                if kkt <= opts.kkt_tol && (outer == 0 || last_step < opts.coef_tol || kkt <= 1e-3 * opts.kkt_tol) {
                    return Ok(LassoFit {
                        coef: beta,
                        sweeps: opts.max_sweeps - budget,
                        kkt_residual: kkt,
                        objective_trace: trace,
                    });
                }
                if budget == 0 {
                    return Err(Error::Convergence {
                        what: "penalized IRLS",
                        iterations: opts.max_sweeps,
                        residual: kkt,
                    });
                }
                let weights: Vec<f64> = eta.iter().map(|e| family.b2(*e).max(opts.weight_floor)).collect();
                let target: Vec<f64> = eta
                    .iter()
                    .zip(&resid)
                    .zip(&weights)
                    .map(|((e, r), w)| e - r / w)
                    .collect();
                let inner = weighted_lasso_cd(
                    &cols,
                    &target,
                    &weights,
                    1.0 / norm,
                    lambda,
                    beta.clone(),
                    opts,
                    1e-2 * opts.kkt_tol,
                    &mut budget,
                )
                .map_err(|e| match e {
                    Error::Convergence { .. } => Error::Convergence {
                        what: "penalized IRLS",
                        iterations: opts.max_sweeps,
                        residual: kkt,
                    },
                    other => other,
                })?;
                trace = inner.objective_trace;
                let direction: Vec<f64> = inner.coef.iter().zip(&beta).map(|(n, o)| n - o).collect();
                let f0 = penalized_objective(family, data, pilot, &beta, lambda);
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let cand: Vec<f64> = beta.iter().zip(&direction).map(|(b, d)| b + step * d).collect();
                    let f1 = penalized_objective(family, data, pilot, &cand, lambda);
                    if f1 <= f0 + 1e-14 * f0.abs().max(1.0) {
                        last_step = direction.iter().fold(0.0, |m, d| m.max((step * d).abs()));
                        beta = cand;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    last_step = 0.0;
                }
                outer += 1;
            }
        }
    }
}

/// Penalized GLM fit over the pilot subsample (Lasso with all coordinates penalized).
pub fn fit_lasso_glm(family: &GlmFamily, data: &Dataset, pilot: &SubsampleIndex, lambda: f64) -> Result<ParamSplit> {
    let fit = fit_lasso_glm_with(family, data, pilot, lambda, None, &LassoOptions::default())?;
    ParamSplit::new(fit.coef, data.d())
}

/// Pilot weights `b''(β̂ₚᵀxᵢ)` clamped at the floor.
fn pilot_weights(family: &GlmFamily, data: &Dataset, rows: &[usize], beta: &[f64], floor: f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = rows.iter().map(|&i| family.b2(data.linear_predictor(i, beta))).collect();
    if raw.iter().all(|w| *w < floor) {
        return Err(Error::DegenerateWeights { floor });
    }
    Ok(raw.into_iter().map(|w| w.max(floor)).collect())
}

/// One row of the decorrelation matrix: the weighted lasso of `z_k` on `u`
/// with objective `(1/rₚ)Σ wᵢ(z_{ik} − ωᵀuᵢ)² + τ‖ω‖₁`.
fn fit_w_row(
    cols_u: &Columns,
    target: &[f64],
    weights: &[f64],
    norm: f64,
    tau: f64,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    let mut budget = opts.max_sweeps;
    let k = cols_u.k();
    weighted_lasso_cd(cols_u, target, weights, 2.0 / norm, tau, vec![0.0; k], opts, opts.kkt_tol, &mut budget)
}

pub fn fit_w_matrix_with(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    beta_p: &ParamSplit,
    tau: f64,
    opts: &LassoOptions,
) -> Result<DMatrix<f64>> {
    pilot.require_nonempty("decorrelation fit")?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("penalty must be non-negative, got {tau}")));
    }
    if beta_p.beta().iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("non-finite pilot coefficients".into()));
    }
    let (p, d) = (data.p(), data.d());
    let rows = pilot.indices();
    let weights = pilot_weights(family, data, rows, beta_p.beta(), opts.weight_floor)?;
    let cols_u = Columns::gather(data, rows, d..p);
    let cols_z = Columns::gather(data, rows, 0..d);
    let norm = expected_size(pilot);
    let fits: Vec<Result<LassoFit>> = (0..d)
        .into_par_iter()
        .map(|k| fit_w_row(&cols_u, cols_z.col(k), &weights, norm, tau, opts))
        .collect();
    let mut w = DMatrix::zeros(d, p - d);
    for (k, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        for (j, c) in fit.coef.into_iter().enumerate() {
            w[(k, j)] = c;
        }
    }
    Ok(w)
}

/// Decorrelation matrix `Ŵₚ` (d × (p − d)), fitted row by row.
pub fn fit_w_matrix(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    beta_p: &ParamSplit,
    tau: f64,
) -> Result<DMatrix<f64>> {
    fit_w_matrix_with(family, data, pilot, beta_p, tau, &LassoOptions::default())
}

/// KKT violation of row `k` of `w` for the decorrelation objective.
pub fn w_row_kkt_residual(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    beta_p: &ParamSplit,
    w: &DMatrix<f64>,
    k: usize,
    tau: f64,
) -> f64 {
    let d = data.d();
    let q = data.p() - d;
    let row: Vec<f64> = (0..q).map(|j| w[(k, j)]).collect();
    let mut grad = vec![0.0; q];
    for &i in pilot.indices() {
        let weight = family.b2(data.linear_predictor(i, beta_p.beta())).max(LassoOptions::default().weight_floor);
        let u = data.u(i);
        let res = data.z(i)[k] - dot(&row, u);
        for (g, uj) in grad.iter_mut().zip(u) {
            *g -= 2.0 * weight * res * uj;
        }
    }
    let norm = expected_size(pilot);
    grad.iter_mut().for_each(|g| *g /= norm);
    kkt_violation(&grad, &row, tau)
}

/// `(1/(n − ‖β̂ₚ‖₀))·Σᵢ(yᵢ − xᵢᵀβ̂ₚ)²` over the full data.
pub fn estimate_dispersion(data: &Dataset, beta_p: &ParamSplit) -> Result<f64> {
    let nnz = beta_p.l0();
    if nnz >= data.n() {
        return Err(Error::DegenerateInput(format!(
            "pilot support size {nnz} is not below n = {}",
            data.n()
        )));
    }
    let rss: f64 = (0..data.n())
        .map(|i| {
            let r = data.y()[i] - data.linear_predictor(i, beta_p.beta());
            r * r
        })
        .sum();
    Ok(rss / (data.n() - nnz) as f64)
}

/// Default penalty `√(log p / rₚ)`.
pub fn default_penalty(p: usize, rp: f64) -> f64 {
    ((p as f64).ln() / rp).sqrt()
}

/// Log-spaced grid over `[c/16, 16c]` around `c = √(log p / rₚ)`, largest first.
pub fn penalty_grid(p: usize, rp: f64, grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::InvalidInput(format!("grid size must be at least 2, got {grid_size}")));
    }
    let c = default_penalty(p, rp);
    let (lo, hi) = ((c / 16.0).ln(), (16.0 * c).ln());
    Ok((0..grid_size)
        .map(|k| (hi - (hi - lo) * k as f64 / (grid_size - 1) as f64).exp())
        .collect())
}

fn fold_assignment(len: usize, folds: usize, seed: SeedSpec) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed.rng());
    let mut fold = vec![0; len];
    for (pos, &k) in order.iter().enumerate() {
        fold[k] = pos % folds;
    }
    fold
}

fn split_folds(pilot: &SubsampleIndex, folds: usize, seed: SeedSpec) -> Result<Vec<(SubsampleIndex, Vec<usize>)>> {
    let idx = pilot.indices();
    let assign = fold_assignment(idx.len(), folds, seed);
    (0..folds)
        .map(|f| {
            let train: Vec<usize> = idx.iter().zip(&assign).filter(|(_, a)| **a != f).map(|(i, _)| *i).collect();
            let test: Vec<usize> = idx.iter().zip(&assign).filter(|(_, a)| **a == f).map(|(i, _)| *i).collect();
            let m = train.len() as f64;
            Ok((SubsampleIndex::from_indices(train, pilot.n(), m)?, test))
        })
        .collect()
}

/// Picks the grid value with the smallest cross-validated loss; ties go to
/// the larger penalty (the grid is ordered largest first).
fn argmin_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] * (1.0 - 1e-12) {
            best = k;
        }
    }
    best
}

/// K-fold cross-validated penalties over explicit grids (any length ≥ 1).
/// `λ` values above `λ_max` of the pilot all give the zero fit and are
/// merged into `λ_max`.
pub fn select_penalties_on_grid(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    lambda_grid: &[f64],
    tau_grid: &[f64],
    folds: usize,
    seed: SeedSpec,
) -> Result<(f64, f64)> {
    if lambda_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    if folds < 2 || pilot.len() < 2 * folds {
        return Err(Error::InvalidInput(format!(
            "need at least 2 folds and 2·folds pilot observations (folds = {folds}, pilot = {})",
            pilot.len()
        )));
    }
    let opts = LassoOptions::default();
    let splits = split_folds(pilot, folds, seed)?;

    let lambda = if lambda_grid.len() == 1 {
        lambda_grid[0]
    } else {
        let lmax = lambda_max(family, data, pilot);
        let mut lambda_grid: Vec<f64> = lambda_grid.iter().map(|&l| l.min(lmax)).collect();
        lambda_grid.dedup();
        let mut scores = vec![0.0; lambda_grid.len()];
        for (train, test) in &splits {
            let mut warm: Option<Vec<f64>> = None;
            for (g, &lam) in lambda_grid.iter().enumerate() {
                let fit = fit_lasso_glm_with(family, data, train, lam, warm.as_deref(), &opts)?;
                scores[g] += test
                    .iter()
                    .map(|&i| {
                        let eta = data.linear_predictor(i, &fit.coef);
                        family.b(eta) - data.y()[i] * eta
                    })
                    .sum::<f64>();
                warm = Some(fit.coef);
            }
        }
        lambda_grid[argmin_first(&scores)]
    };

    let tau = if tau_grid.len() == 1 {
        tau_grid[0]
    } else {
        let beta_p = fit_lasso_glm(family, data, pilot, lambda)?;
        let mut scores = vec![0.0; tau_grid.len()];
        for (train, test) in &splits {
            for (g, &tau) in tau_grid.iter().enumerate() {
                let w = fit_w_matrix_with(family, data, train, &beta_p, tau, &opts)?;
                scores[g] += test
                    .iter()
                    .map(|&i| {
                        let weight = family.b2(data.linear_predictor(i, beta_p.beta()));
                        let u = data.u(i);
                        (0..data.d())
                            .map(|k| {
                                let res = data.z(i)[k] - (0..u.len()).map(|j| w[(k, j)] * u[j]).sum::<f64>();
                                weight * res * res
                            })
                            .sum::<f64>()
                    })
                    .sum::<f64>();
            }
        }
        tau_grid[argmin_first(&scores)]
    };
    Ok((lambda, tau))
}

/// K-fold cross-validated `(λ, τ)` over a log grid centered at `√(log p / rₚ)`.
pub fn select_penalties(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &SubsampleIndex,
    grid_size: usize,
    folds: usize,
    seed: SeedSpec,
) -> Result<(f64, f64)> {
    let grid = penalty_grid(data.p(), pilot.r(), grid_size)?;
    select_penalties_on_grid(family, data, pilot, &grid, &grid, folds, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub grid_size: usize,
    pub folds: usize,
}

/// How the pilot penalties are chosen. Explicit values win over CV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub cv: Option<CvConfig>,
}

/// Everything estimated on the pilot subsample.
#[derive(Debug, Clone)]
pub struct PilotFit {
    pub beta_p: ParamSplit,
    pub w_p: DMatrix<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub dispersion_hat: f64,
    pub pilot: SubsampleIndex,
}

/// Fits `β̂ₚ`, `Ŵₚ` and `ĉ(σ₀)` on `pilot`. `seed` drives CV fold assignment.
pub fn fit_pilot(
    family: &GlmFamily,
    data: &Dataset,
    pilot: SubsampleIndex,
    penalties: &PenaltyConfig,
    seed: SeedSpec,
) -> Result<PilotFit> {
    pilot.require_nonempty("pilot fit")?;
    let default = default_penalty(data.p(), pilot.r());
    let (cv_lambda, cv_tau) = match penalties.cv {
        Some(cv) if penalties.lambda.is_none() || penalties.tau.is_none() => {
            let grid = penalty_grid(data.p(), pilot.r(), cv.grid_size)?;
            let lgrid = penalties.lambda.map_or_else(|| grid.clone(), |l| vec![l]);
            let tgrid = penalties.tau.map_or_else(|| grid.clone(), |t| vec![t]);
            select_penalties_on_grid(family, data, &pilot, &lgrid, &tgrid, cv.folds, seed.with_stream(streams::CV_FOLDS))?
        }
        _ => (default, default),
    };
    let lambda = penalties.lambda.unwrap_or(cv_lambda);
    let tau = penalties.tau.unwrap_or(cv_tau);
    let beta_p = fit_lasso_glm(family, data, &pilot, lambda)?;
    let w_p = fit_w_matrix(family, data, &pilot, &beta_p, tau)?;
    let dispersion_hat = match family.kind {
        FamilyKind::Gaussian => estimate_dispersion(data, &beta_p)?,
        FamilyKind::Logistic => 1.0,
    };
    Ok(PilotFit {
        beta_p,
        w_p,
        lambda,
        tau,
        dispersion_hat,
        pilot,
    })
}
