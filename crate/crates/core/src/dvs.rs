//! The de-variance subsampling estimator and its Monte-Carlo intervals.
//!
//! The limit law of `min(√n, r)(θ̃ − θ₀)` is `h(U)` with `U ~ N(0, V)`.
//! Vectorization is row-major throughout: entry `(a, b)` of a `d × d`
//! matrix sits at index `a·d + b`, both in the columns of `T` and in the
//! reshape of `U₃`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ci::{CiMethod, CiSet};
use crate::error::{Error, Result};
use crate::glm::{dot, Dataset, GlmFamily};
use crate::lasso::PilotFit;
use crate::linalg::{inverse, psd_factor, solve};
use crate::rng::SeedSpec;
use crate::score::ScoreContext;
use crate::stats::{order_statistic, sort_floats};
use crate::subsample::SubsampleIndex;

/// Default cap on `d² + 2d`, the dimension of `U`.
pub const DEFAULT_DIMENSION_CAP: usize = 400;
pub const DEFAULT_MC_DRAWS: usize = 10_000;

/// Result of the subsampled solve plus the one-step full-data correction.
#[derive(Debug, Clone)]
pub struct DvsEstimate {
    pub theta_uni: Vec<f64>,
    pub theta_dvs: Vec<f64>,
    pub newton_iterations: usize,
}

/// `θ̃ = θ_uni − (∇θS*(θ_uni))⁻¹ S(θ_uni)`: subsample Jacobian, full-data score.
pub fn dvs_estimate(ctx: &ScoreContext<'_>, sub: &SubsampleIndex, theta_uni: &[f64]) -> Result<Vec<f64>> {
    let jac = ctx.score_jacobian_theta(theta_uni, Some(sub));
    let s = ctx.score(theta_uni, None);
    let step = solve(&jac, &s, "subsampled score Jacobian")?;
    Ok(theta_uni.iter().zip(step.iter()).map(|(t, s)| t - s).collect())
}

/// Solves the subsampled score from `init` and applies the correction.
pub fn dvs_fit(ctx: &ScoreContext<'_>, sub: &SubsampleIndex, init: &[f64]) -> Result<DvsEstimate> {
    let (theta_uni, newton_iterations) = ctx.solve_subsampled_score(sub, init)?;
    let theta_dvs = dvs_estimate(ctx, sub, &theta_uni)?;
    Ok(DvsEstimate {
        theta_uni,
        theta_dvs,
        newton_iterations,
    })
}

/// `(m₁, m₂) = (min(√n, r)/√n, min(√n, r)/r)`.
pub fn rate_multipliers(n: usize, r: f64) -> (f64, f64) {
    let sqrt_n = (n as f64).sqrt();
    if r >= sqrt_n {
        (1.0, sqrt_n / r)
    } else {
        (r / sqrt_n, 1.0)
    }
}

/// `min(√n, r)`, the rate of the DVS estimator.
pub fn dvs_rate(n: usize, r: f64) -> f64 {
    (n as f64).sqrt().min(r)
}

#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    pub phi_hat: DMatrix<f64>,
    /// `d × d²`; row `j` is the row-major vec of the `b'''` moment matrix.
    pub t_hat: DMatrix<f64>,
    /// Covariance of `U = (U₁, U₂, vec U₃)`.
    pub v_hat: DMatrix<f64>,
    pub m1: f64,
    pub m2: f64,
    pub r: f64,
    pub n: usize,
}

impl AsymptoticModel {
    pub fn d(&self) -> usize {
        self.phi_hat.nrows()
    }

    /// Assembles `V` from its nonzero blocks: `V₁₁ = V₂₂ = cΦ`,
    /// `V₁₂ = √(r/n)V₁₁`, and the given `V₃₃`.
    pub fn from_parts(
        phi_hat: DMatrix<f64>,
        t_hat: DMatrix<f64>,
        dispersion: f64,
        v33: DMatrix<f64>,
        r: f64,
        n: usize,
    ) -> Result<Self> {
        let d = phi_hat.nrows();
        if phi_hat.ncols() != d || t_hat.nrows() != d || t_hat.ncols() != d * d || v33.shape() != (d * d, d * d) {
            return Err(Error::InvalidInput("inconsistent asymptotic model shapes".into()));
        }
        if !(r > 0.0 && r <= n as f64) {
            return Err(Error::InvalidInput(format!("need 0 < r ≤ n, got r = {r}, n = {n}")));
        }
        let v11 = &phi_hat * dispersion;
        let v12 = &v11 * (r / n as f64).sqrt();
        let dim = d * d + 2 * d;
        let mut v = DMatrix::zeros(dim, dim);
        v.view_mut((0, 0), (d, d)).copy_from(&v11);
        v.view_mut((d, d), (d, d)).copy_from(&v11);
        v.view_mut((0, d), (d, d)).copy_from(&v12);
        v.view_mut((d, 0), (d, d)).copy_from(&v12.transpose());
        v.view_mut((2 * d, 2 * d), (d * d, d * d)).copy_from(&v33);
        let (m1, m2) = rate_multipliers(n, r);
        Ok(Self {
            phi_hat,
            t_hat,
            v_hat: v,
            m1,
            m2,
            r,
            n,
        })
    }
}

/// `Φ̃ = (1/rₚ)Σ_{𝒦ₚ} b''(θᵀzᵢ + γ̂ₚᵀuᵢ)(zᵢ − Ŵₚuᵢ)(zᵢ − Ŵₚuᵢ)ᵀ`, symmetric by construction.
pub fn phi_tilde(family: &GlmFamily, data: &Dataset, pilot: &PilotFit, theta: &[f64]) -> DMatrix<f64> {
    let d = data.d();
    let gamma = pilot.beta_p.gamma();
    let mut phi = DMatrix::zeros(d, d);
    let mut zt = vec![0.0; d];
    for &i in pilot.pilot.indices() {
        let (z, u) = (data.z(i), data.u(i));
        for k in 0..d {
            zt[k] = z[k] - pilot.w_p.row(k).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        let b2 = family.b2(dot(theta, z) + dot(gamma, u));
        for a in 0..d {
            for b in 0..d {
                phi[(a, b)] += b2 * zt[a] * zt[b];
            }
        }
    }
    phi / pilot.pilot.r()
}

pub fn estimate_asymptotic_model(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    theta_plug: &[f64],
    r: f64,
    n: usize,
) -> Result<AsymptoticModel> {
    estimate_asymptotic_model_capped(family, data, pilot, theta_plug, r, n, DEFAULT_DIMENSION_CAP)
}

/// Plug-in moments over the pilot at `(θ̃, γ̂ₚ, Ŵₚ)`.
pub fn estimate_asymptotic_model_capped(
    family: &GlmFamily,
    data: &Dataset,
    pilot: &PilotFit,
    theta_plug: &[f64],
    r: f64,
    n: usize,
    cap: usize,
) -> Result<AsymptoticModel> {
    let d = data.d();
    if d * d + 2 * d > cap {
        return Err(Error::DimensionCap { dim: d * d + 2 * d, cap, d });
    }
    pilot.pilot.require_nonempty("asymptotic model")?;
    if theta_plug.len() != d {
        return Err(Error::InvalidInput(format!("plug-in has length {}, expected {d}", theta_plug.len())));
    }
    let gamma = pilot.beta_p.gamma();
    let w = &pilot.w_p;
    let dd = d * d;
    let mut phi = DMatrix::zeros(d, d);
    let mut t = DMatrix::zeros(d, dd);
    let mut v33 = DMatrix::zeros(dd, dd);
    let mut zt = vec![0.0; d];
    let mut vec_m = vec![0.0; dd];
    for &i in pilot.pilot.indices() {
        let (z, u) = (data.z(i), data.u(i));
        for k in 0..d {
            zt[k] = z[k] - w.row(k).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        let eta = dot(theta_plug, z) + dot(gamma, u);
        let (b2, b3) = (family.b2(eta), family.b3(eta));
        for a in 0..d {
            for b in 0..d {
                phi[(a, b)] += b2 * zt[a] * zt[b];
                vec_m[a * d + b] = zt[a] * z[b];
            }
        }
        if b3 != 0.0 {
            for j in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        t[(j, a * d + b)] += b3 * zt[j] * z[a] * z[b];
                    }
                }
            }
        }
        let b22 = b2 * b2;
        for a in 0..dd {
            let s = b22 * vec_m[a];
            for b in 0..dd {
                v33[(a, b)] += s * vec_m[b];
            }
        }
    }
    let rp = pilot.pilot.r();
    phi /= rp;
    t /= rp;
    v33 *= (1.0 - r / n as f64) / rp;
    AsymptoticModel::from_parts(phi, t, pilot.dispersion_hat, v33, r, n)
}

/// `h` with `Φ⁻¹` computed once.
struct HMap<'a> {
    model: &'a AsymptoticModel,
    phi_inv: DMatrix<f64>,
}

impl<'a> HMap<'a> {
    fn new(model: &'a AsymptoticModel) -> Result<Self> {
        Ok(Self {
            model,
            phi_inv: inverse(&model.phi_hat, "Φ estimate")?,
        })
    }

    fn apply(&self, u: &[f64]) -> DVector<f64> {
        let d = self.model.d();
        let (m1, m2) = (self.model.m1, self.model.m2);
        let u1 = DVector::from_column_slice(&u[..d]);
        let u2 = DVector::from_column_slice(&u[d..2 * d]);
        let u3 = DMatrix::from_row_slice(d, d, &u[2 * d..]);
        let v = &self.phi_inv * u1;
        let mut inner = -m1 * u2 - m2 * (u3 * &v);
        if self.model.t_hat.iter().any(|x| *x != 0.0) {
            let kron = DVector::from_iterator(d * d, (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| v[a] * v[b]));
            inner += 0.5 * m2 * (&self.model.t_hat * kron);
        }
        &self.phi_inv * inner
    }
}

/// `h(U) = ½m₂Φ⁻¹T((Φ⁻¹U₁)⊗(Φ⁻¹U₁)) − m₁Φ⁻¹U₂ − m₂Φ⁻¹U₃Φ⁻¹U₁`.
pub fn h_transform(model: &AsymptoticModel, u: &[f64]) -> Result<Vec<f64>> {
    let d = model.d();
    if u.len() != d * d + 2 * d {
        return Err(Error::InvalidInput(format!("U has length {}, expected {}", u.len(), d * d + 2 * d)));
    }
    Ok(HMap::new(model)?.apply(u).iter().copied().collect())
}

/// Per-coordinate draws of `h(U)`, `U ~ N(0, V̂)`, sorted ascending.
/// Draw `k` uses its own substream of `seed`, so the result does not depend
/// on how draws are spread over threads.
pub fn h_draws(model: &AsymptoticModel, draws: usize, seed: SeedSpec) -> Result<Vec<Vec<f64>>> {
    let map = HMap::new(model)?;
    let factor = psd_factor(&model.v_hat)?;
    let dim = factor.nrows();
    let d = model.d();
    let samples: Vec<DVector<f64>> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed.substream(k as u64);
            let xi = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let u = &factor * xi;
            map.apply(u.as_slice())
        })
        .collect();
    let mut per_coord: Vec<Vec<f64>> = (0..d).map(|j| samples.iter().map(|h| h[j]).collect()).collect();
    per_coord.iter_mut().for_each(|v| sort_floats(v));
    Ok(per_coord)
}

/// Intervals `[θ̃ − h_U/min(√n, r), θ̃ − h_L/min(√n, r)]` from `r_m` draws.
pub fn dvs_confidence_intervals(
    model: &AsymptoticModel,
    theta_dvs: &[f64],
    alpha: f64,
    r_m: usize,
    seed: SeedSpec,
) -> Result<CiSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if r_m < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 Monte-Carlo draws, got {r_m}")));
    }
    let draws = h_draws(model, r_m, seed)?;
    let rate = dvs_rate(model.n, model.r);
    let mut lower = Vec::with_capacity(model.d());
    let mut upper = Vec::with_capacity(model.d());
    for (j, sorted) in draws.iter().enumerate() {
        let h_l = order_statistic(sorted, alpha / 2.0);
        let h_u = order_statistic(sorted, 1.0 - alpha / 2.0);
        lower.push(theta_dvs[j] - h_u / rate);
        upper.push(theta_dvs[j] - h_l / rate);
    }
    Ok(CiSet {
        estimates: theta_dvs.to_vec(),
        lower,
        upper,
        level: 1.0 - alpha,
        method: CiMethod::DvsMc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;
    use crate::stats::normal_quantile;

    fn scalar_model(phi: f64, t: f64, v: [[f64; 3]; 3], m: (f64, f64)) -> AsymptoticModel {
        AsymptoticModel {
            phi_hat: DMatrix::from_element(1, 1, phi),
            t_hat: DMatrix::from_element(1, 1, t),
            v_hat: DMatrix::from_fn(3, 3, |a, b| v[a][b]),
            m1: m.0,
            m2: m.1,
            r: 100.0,
            n: 10_000,
        }
    }

    #[test]
    fn scalar_h_examples() {
        let m = scalar_model(2.0, 0.0, [[0.0; 3]; 3], (1.0, 1.0));
        assert_eq!(h_transform(&m, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0]);
        let (u1, u2, u3) = (0.7, -1.3, 2.1);
        let h = h_transform(&m, &[u1, u2, u3]).unwrap()[0];
        assert!((h - (-u2 / 2.0 - u3 * u1 / 4.0)).abs() < 1e-15);

        // with T = t the quadratic term ½·m₂·t·u₁²/Φ³ appears
        let (phi, t, m2) = (1.5, 0.8, 0.3);
        let m = scalar_model(phi, t, [[0.0; 3]; 3], (0.9, m2));
        let h = h_transform(&m, &[u1, u2, u3]).unwrap()[0];
        let oracle = 0.5 * m2 * t * u1 * u1 / phi.powi(3) - 0.9 * u2 / phi - m2 * u3 * u1 / (phi * phi);
        assert!((h - oracle).abs() < 1e-14);
    }

    #[test]
    fn multipliers_cover_regimes() {
        for (n, r) in [(10_000usize, 10.0), (10_000, 1000.0), (10_000, 100.0)] {
            let (m1, m2) = rate_multipliers(n, r);
            let m = dvs_rate(n, r);
            assert_eq!(m1 * (n as f64).sqrt(), m);
            assert_eq!(m2 * r, m);
            if r >= (n as f64).sqrt() {
                assert_eq!(m1, 1.0);
            } else {
                assert_eq!(m2, 1.0);
            }
        }
    }

    #[test]
    fn zero_covariance_gives_point_interval() {
        let m = scalar_model(2.0, 0.0, [[0.0; 3]; 3], (1.0, 0.1));
        let ci = dvs_confidence_intervals(&m, &[0.4], 0.05, 200, SeedSpec::new(1, streams::MONTE_CARLO)).unwrap();
        assert_eq!((ci.lower[0], ci.upper[0]), (0.4, 0.4));
    }

    #[test]
    fn intervals_nest_and_replay() {
        let v = [[1.0, 0.1, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 0.5]];
        let m = scalar_model(1.2, 0.3, v, (1.0, 0.5));
        let seed = SeedSpec::new(4, streams::MONTE_CARLO);
        let wide = dvs_confidence_intervals(&m, &[0.0], 0.05, 2000, seed).unwrap();
        let narrow = dvs_confidence_intervals(&m, &[0.0], 0.10, 2000, seed).unwrap();
        assert!(wide.lower[0] <= narrow.lower[0] && narrow.upper[0] <= wide.upper[0]);
        assert_eq!(wide, dvs_confidence_intervals(&m, &[0.0], 0.05, 2000, seed).unwrap());
        assert!(matches!(
            dvs_confidence_intervals(&m, &[0.0], 0.05, 99, seed),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn large_r_limit_is_normal() {
        // d = 1 gaussian, r ≫ √n: width → 2ρ·√(c/Φ)/√n
        let (n, r, phi, c) = (100_000_000usize, 1e6, 2.0, 1.5);
        let v33 = DMatrix::from_element(1, 1, 0.7);
        let model = AsymptoticModel::from_parts(
            DMatrix::from_element(1, 1, phi),
            DMatrix::zeros(1, 1),
            c,
            v33,
            r,
            n,
        )
        .unwrap();
        let ci = dvs_confidence_intervals(&model, &[0.0], 0.05, 100_000, SeedSpec::new(2, 3)).unwrap();
        let half = (ci.upper[0] - ci.lower[0]) / 2.0;
        let oracle = normal_quantile(0.975) * (c / phi).sqrt() / (n as f64).sqrt();
        assert!((half / oracle - 1.0).abs() < 0.05, "{half} vs {oracle}");
    }

    #[test]
    fn sampled_covariance_matches() {
        let v = [[1.0, 0.3, 0.2], [0.3, 0.8, 0.0], [0.2, 0.0, 0.6]];
        let m = scalar_model(1.0, 0.0, v, (1.0, 1.0));
        let factor = psd_factor(&m.v_hat).unwrap();
        let draws = 100_000;
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        let seed = SeedSpec::new(6, 3);
        for k in 0..draws {
            let mut rng = seed.substream(k);
            let xi = DVector::from_iterator(3, (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let u = &factor * xi;
            cov += &u * u.transpose();
        }
        cov /= draws as f64;
        assert!((cov - &m.v_hat).norm() / m.v_hat.norm() < 0.05);
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let v = [[1.0, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, 1.0]];
        let m = scalar_model(1.0, 0.0, v, (1.0, 1.0));
        assert!(matches!(
            dvs_confidence_intervals(&m, &[0.0], 0.05, 100, SeedSpec::new(1, 3)),
            Err(Error::InvalidCovariance { .. })
        ));
    }
}
