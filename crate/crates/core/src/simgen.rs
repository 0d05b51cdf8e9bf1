//! Synthetic designs: Toeplitz-correlated Gaussian or multivariate-t
//! covariates with linear or logistic responses.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, FamilyKind, GlmFamily};
use crate::rng::{streams, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovDist {
    Gaussian,
    T10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrDist {
    StdNormal,
    TwoT5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelKind,
    pub cov_dist: CovDist,
    #[serde(default = "default_err")]
    pub err_dist: ErrDist,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub beta0: Vec<f64>,
    #[serde(default)]
    pub alpha0: f64,
    #[serde(default = "default_scale")]
    pub cov_scale: f64,
    /// Linear model without noise, `y = Xβ₀`.
    #[serde(default)]
    pub noiseless: bool,
}

fn default_err() -> ErrDist {
    ErrDist::StdNormal
}

fn default_rho() -> f64 {
    0.5
}

fn default_scale() -> f64 {
    1.0
}

pub const PRESETS: [&str; 6] = ["linear-a", "linear-b", "linear-c", "linear-d", "logistic-a", "logistic-b"];

impl SimConfig {
    /// Named designs. Linear: `β₀ = (√3, √3, √3, 0, …)`, cases (a)–(d) cross
    /// Gaussian/t₁₀ covariates with N(0,1)/2t₅ noise. Logistic:
    /// `β₀ = (1, −1, 1, 0, …)`, `α₀ = 0.5`, covariates divided by 3.
    pub fn preset(name: &str, n: usize, p: usize, d: usize) -> Result<Self> {
        let (model, cov_dist, err_dist) = match name {
            "linear-a" => (ModelKind::Linear, CovDist::Gaussian, ErrDist::StdNormal),
            "linear-b" => (ModelKind::Linear, CovDist::Gaussian, ErrDist::TwoT5),
            "linear-c" => (ModelKind::Linear, CovDist::T10, ErrDist::StdNormal),
            "linear-d" => (ModelKind::Linear, CovDist::T10, ErrDist::TwoT5),
            "logistic-a" => (ModelKind::Logistic, CovDist::Gaussian, ErrDist::StdNormal),
            "logistic-b" => (ModelKind::Logistic, CovDist::T10, ErrDist::StdNormal),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        if p < 3 {
            return Err(Error::InvalidInput(format!("presets need p ≥ 3, got {p}")));
        }
        let mut beta0 = vec![0.0; p];
        let (head, alpha0, cov_scale) = match model {
            ModelKind::Linear => ([3f64.sqrt(); 3], 0.0, 1.0),
            ModelKind::Logistic => ([1.0, -1.0, 1.0], 0.5, 3.0),
        };
        beta0[..3].copy_from_slice(&head);
        let config = Self {
            model,
            cov_dist,
            err_dist,
            n,
            p,
            d,
            rho: 0.5,
            beta0,
            alpha0,
            cov_scale,
            noiseless: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in (−1, 1), got {}", self.rho)));
        }
        if self.beta0.len() != self.p {
            return Err(Error::InvalidInput(format!("beta0 has length {}, expected p = {}", self.beta0.len(), self.p)));
        }
        if self.d == 0 || self.d > self.p || self.n == 0 {
            return Err(Error::InvalidInput(format!("invalid sizes n = {}, p = {}, d = {}", self.n, self.p, self.d)));
        }
        if !(self.cov_scale > 0.0) {
            return Err(Error::InvalidInput("cov_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> GlmFamily {
        GlmFamily::from_kind(match self.model {
            ModelKind::Linear => FamilyKind::Gaussian,
            ModelKind::Logistic => FamilyKind::Logistic,
        })
    }

    /// Width of the generated dataset: logistic designs carry a trailing
    /// constant column for the intercept.
    pub fn data_p(&self) -> usize {
        match self.model {
            ModelKind::Linear => self.p,
            ModelKind::Logistic => self.p + 1,
        }
    }

    /// True coefficients in the dataset's column order.
    pub fn beta_full(&self) -> Vec<f64> {
        let mut b = self.beta0.clone();
        if self.model == ModelKind::Logistic {
            b.push(self.alpha0);
        }
        b
    }

    pub fn theta0(&self) -> Vec<f64> {
        self.beta0[..self.d].to_vec()
    }
}

/// Lower Cholesky factor of `Σⱼₖ = ρ^{|j−k|}`.
pub fn toeplitz_cholesky(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (−1, 1), got {rho}")));
    }
    let sigma = DMatrix::from_fn(p, p, |j, k| rho.powi((j as i32 - k as i32).abs()));
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("Toeplitz matrix is not positive definite".into()))?;
    Ok(chol.l())
}

/// Maps i.i.d. standard normals to `N(0, Σ)` in place. For the Toeplitz
/// `Σ` the Cholesky factor acts as the AR(1) recursion
/// `x₁ = z₁, xⱼ = ρxⱼ₋₁ + √(1−ρ²)zⱼ`.
fn correlate(z: &mut [f64], rho: f64) {
    let s = (1.0 - rho * rho).sqrt();
    for j in 1..z.len() {
        z[j] = rho * z[j - 1] + s * z[j];
    }
}

/// `n × p` covariates, row-major. Row `i` draws from substream `i` of `seed`.
pub fn gen_covariates(config: &SimConfig, n: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    config.validate()?;
    let p = config.p;
    let chi = ChiSquared::<f64>::new(10.0).expect("positive degrees of freedom");
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.substream(i as u64);
            let mut row: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            correlate(&mut row, config.rho);
            let mut scale = config.cov_scale;
            if config.cov_dist == CovDist::T10 {
                scale *= (Distribution::<f64>::sample(&chi, &mut rng) / 10.0).sqrt();
            }
            row.iter_mut().for_each(|v| *v /= scale);
            row
        })
        .collect();
    Ok(rows.concat())
}

/// Responses for covariates `x` (`n × width`, row-major) under `beta`.
fn responses(config: &SimConfig, x: &[f64], width: usize, beta: &[f64], seed: SeedSpec) -> Vec<f64> {
    let n = x.len() / width;
    let t5 = StudentT::new(5.0).expect("positive degrees of freedom");
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &x[i * width..(i + 1) * width];
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let mut rng = seed.substream(i as u64);
            match config.model {
                ModelKind::Linear if config.noiseless => eta,
                ModelKind::Linear => {
                    eta + match config.err_dist {
                        ErrDist::StdNormal => rng.sample::<f64, _>(StandardNormal),
                        ErrDist::TwoT5 => 2.0 * t5.sample(&mut rng),
                    }
                }
                ModelKind::Logistic => {
                    let prob = 1.0 / (1.0 + (-eta).exp());
                    f64::from(rng.random::<f64>() < prob)
                }
            }
        })
        .collect()
}

/// `y` for `n × p` covariates; the logistic intercept `α₀` is added to the
/// linear predictor.
pub fn gen_response(config: &SimConfig, x: &[f64], seed: SeedSpec) -> Result<Vec<f64>> {
    config.validate()?;
    if !x.len().is_multiple_of(config.p) {
        return Err(Error::InvalidInput(format!("covariate buffer is not a multiple of p = {}", config.p)));
    }
    let mut beta = config.beta0.clone();
    let mut width = config.p;
    let owned;
    let x = if config.model == ModelKind::Logistic {
        owned = with_intercept(x, config.p);
        beta.push(config.alpha0);
        width += 1;
        &owned[..]
    } else {
        x
    };
    Ok(responses(config, x, width, &beta, seed))
}

fn with_intercept(x: &[f64], p: usize) -> Vec<f64> {
    x.chunks(p).flat_map(|row| row.iter().copied().chain(std::iter::once(1.0))).collect()
}

/// Generated data with its ground truth.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub theta0: Vec<f64>,
    pub beta_full: Vec<f64>,
}

/// Covariates from stream `covariates`, responses from stream `response`,
/// both under `master_seed`.
pub fn simulate(config: &SimConfig, master_seed: u64) -> Result<SimData> {
    let x = gen_covariates(config, config.n, SeedSpec::new(master_seed, streams::COVARIATES))?;
    let y = gen_response(config, &x, SeedSpec::new(master_seed, streams::RESPONSE))?;
    let x = match config.model {
        ModelKind::Linear => x,
        ModelKind::Logistic => with_intercept(&x, config.p),
    };
    Ok(SimData {
        data: Dataset::new(x, y, config.data_p(), config.d)?,
        theta0: config.theta0(),
        beta_full: config.beta_full(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(model: ModelKind, cov: CovDist, err: ErrDist, p: usize, rho: f64) -> SimConfig {
        SimConfig {
            model,
            cov_dist: cov,
            err_dist: err,
            n: 10,
            p,
            d: 1,
            rho,
            beta0: vec![0.0; p],
            alpha0: 0.5,
            cov_scale: 1.0,
            noiseless: false,
        }
    }

    fn covariance(x: &[f64], p: usize) -> DMatrix<f64> {
        let n = x.len() / p;
        let mut c = DMatrix::zeros(p, p);
        for row in x.chunks(p) {
            for a in 0..p {
                for b in 0..p {
                    c[(a, b)] += row[a] * row[b];
                }
            }
        }
        c / n as f64
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(toeplitz_cholesky(4, 0.0).unwrap(), DMatrix::identity(4, 4));
        let l = toeplitz_cholesky(2, 0.5).unwrap();
        assert!((l[(1, 0)] - 0.5).abs() < 1e-15 && (l[(1, 1)] - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let l = toeplitz_cholesky(50, 0.5).unwrap();
        let sigma = DMatrix::from_fn(50, 50, |j, k| 0.5f64.powi((j as i32 - k as i32).abs()));
        assert!((&l * l.transpose() - sigma).amax() < 1e-10);
        assert!(toeplitz_cholesky(3, 1.0).is_err());
    }

    #[test]
    fn recursion_equals_cholesky_product() {
        let l = toeplitz_cholesky(30, 0.7).unwrap();
        let z: Vec<f64> = (0..30).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let mut x = z.clone();
        correlate(&mut x, 0.7);
        let oracle = &l * nalgebra::DVector::from_vec(z);
        for j in 0..30 {
            assert!((x[j] - oracle[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_correlations() {
        let n = 100_000;
        let c = config(ModelKind::Linear, CovDist::Gaussian, ErrDist::StdNormal, 4, 0.0);
        let x = gen_covariates(&c, n, SeedSpec::new(1, streams::COVARIATES)).unwrap();
        let cov = covariance(&x, 4);
        for a in 0..4 {
            for b in 0..a {
                let corr = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
                assert!(corr.abs() < 0.02);
            }
        }
        let c = config(ModelKind::Linear, CovDist::Gaussian, ErrDist::StdNormal, 4, 0.5);
        let x = gen_covariates(&c, n, SeedSpec::new(2, streams::COVARIATES)).unwrap();
        let cov = covariance(&x, 4);
        let corr = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!((corr - 0.5).abs() < 0.02);
    }

    #[test]
    fn multivariate_t_covariance() {
        let n = 100_000;
        let mut c = config(ModelKind::Logistic, CovDist::T10, ErrDist::StdNormal, 3, 0.5);
        c.cov_scale = 3.0;
        let x = gen_covariates(&c, n, SeedSpec::new(3, streams::COVARIATES)).unwrap();
        let cov = covariance(&x, 3);
        for a in 0..3 {
            for b in 0..3 {
                let oracle = 1.25 * 0.5f64.powi((a as i32 - b as i32).abs()) / 9.0;
                assert!((cov[(a, b)] / oracle - 1.0).abs() < 0.05, "({a},{b})");
            }
        }
    }

    #[test]
    fn responses() {
        let mut c = config(ModelKind::Linear, CovDist::Gaussian, ErrDist::StdNormal, 3, 0.5);
        c.beta0 = vec![1.0, -2.0, 0.5];
        c.noiseless = true;
        let x = gen_covariates(&c, 20, SeedSpec::new(1, 10)).unwrap();
        let y = gen_response(&c, &x, SeedSpec::new(1, 11)).unwrap();
        for (row, y) in x.chunks(3).zip(&y) {
            assert_eq!(*y, row[0] - 2.0 * row[1] + 0.5 * row[2]);
        }

        let n = 100_000;
        let c = config(ModelKind::Linear, CovDist::Gaussian, ErrDist::TwoT5, 3, 0.5);
        let y = gen_response(&c, &vec![0.0; 3 * n], SeedSpec::new(5, 11)).unwrap();
        let var = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var / (4.0 * 5.0 / 3.0) - 1.0).abs() < 0.05, "{var}");

        let c = config(ModelKind::Logistic, CovDist::Gaussian, ErrDist::StdNormal, 3, 0.5);
        let y = gen_response(&c, &vec![0.0; 3 * n], SeedSpec::new(6, 11)).unwrap();
        let rate = y.iter().sum::<f64>() / n as f64;
        let oracle = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((oracle - 0.62246).abs() < 1e-5);
        assert!((rate - oracle).abs() < 4.0 * (oracle * (1.0 - oracle) / n as f64).sqrt());
    }

    #[test]
    fn presets_and_determinism() {
        let c = SimConfig::preset("logistic-a", 200, 10, 3).unwrap();
        assert_eq!(c.beta0[..4], [1.0, -1.0, 1.0, 0.0]);
        let a = simulate(&c, 7).unwrap();
        let b = simulate(&c, 7).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data.p(), 11);
        assert!((0..200).all(|i| a.data.row(i)[10] == 1.0));
        assert_eq!(a.beta_full.len(), 11);
        assert_ne!(simulate(&c, 8).unwrap().data, a.data);
        let lin = SimConfig::preset("linear-d", 50, 5, 2).unwrap();
        assert_eq!(lin.beta0, vec![3f64.sqrt(), 3f64.sqrt(), 3f64.sqrt(), 0.0, 0.0]);
        assert!(SimConfig::preset("linear-e", 10, 5, 1).is_err());
    }

    #[test]
    fn output_independent_of_thread_count() {
        let c = SimConfig::preset("linear-c", 500, 8, 2).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| simulate(&c, 3).unwrap());
        let b = three.install(|| simulate(&c, 3).unwrap());
        assert_eq!(a.data, b.data);
    }
}
