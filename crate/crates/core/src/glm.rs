//! GLM families with canonical link, datasets with an interest/nuisance
//! column split, and parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Logistic,
}

/// Cumulant function `b` and its derivatives for a canonical-link family.
///
/// Logistic models have known dispersion `c(σ₀) = 1`; Gaussian models carry
/// `c(σ₀) = σ²`, which is estimated from pilot residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlmFamily {
    pub kind: FamilyKind,
    pub dispersion_known: bool,
}

/// `(b(t), b'(t), b''(t), b'''(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BDerivatives {
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl GlmFamily {
    pub fn gaussian() -> Self {
        Self {
            kind: FamilyKind::Gaussian,
            dispersion_known: false,
        }
    }

    pub fn logistic() -> Self {
        Self {
            kind: FamilyKind::Logistic,
            dispersion_known: true,
        }
    }

    pub fn from_kind(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Gaussian => Self::gaussian(),
            FamilyKind::Logistic => Self::logistic(),
        }
    }

    pub fn derivatives(&self, t: f64) -> Result<BDerivatives> {
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite linear predictor {t}")));
        }
        Ok(BDerivatives {
            b: self.b(t),
            b1: self.b1(t),
            b2: self.b2(t),
            b3: self.b3(t),
        })
    }

    #[inline]
    pub fn b(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 0.5 * t * t,
            FamilyKind::Logistic => t.max(0.0) + (-t.abs()).exp().ln_1p(),
        }
    }

    /// Conditional mean `b'(t)`.
    #[inline]
    pub fn b1(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => t,
            FamilyKind::Logistic => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Variance function `b''(t)`.
    #[inline]
    pub fn b2(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Logistic => {
                // 1 / ((1 + e^t)(1 + e^-t)) written in terms of e^-|t|
                let e = (-t.abs()).exp();
                let s = 1.0 + e;
                e / (s * s)
            }
        }
    }

    #[inline]
    pub fn b3(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 0.0,
            FamilyKind::Logistic => {
                let e = (-t.abs()).exp();
                let s = 1.0 + e;
                let v = e * (e - 1.0) / (s * s * s);
                if t >= 0.0 {
                    v
                } else {
                    -v
                }
            }
        }
    }
}

/// Row-major design with response; columns `0..d` are the interest block `z`,
/// columns `d..p` the nuisance block `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
    d: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, p: usize, d: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset needs at least one observation".into()));
        }
        if d == 0 || d >= p {
            return Err(Error::InvalidInput(format!(
                "interest dimension must satisfy 1 <= d < p (d = {d}, p = {p})"
            )));
        }
        if x.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "design has {} entries, expected n*p = {}",
                x.len(),
                n * p
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite entries".into()));
        }
        Ok(Self { x, y, n, p, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn z(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.d]
    }

    #[inline]
    pub fn u(&self, i: usize) -> &[f64] {
        &self.row(i)[self.d..]
    }

    #[inline]
    pub fn linear_predictor(&self, i: usize, beta: &[f64]) -> f64 {
        dot(self.row(i), beta)
    }

    /// Same design with a different interest dimension.
    pub fn with_interest_dim(&self, d: usize) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), self.p, d)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>, usize) {
        (self.x, self.y, self.p)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `β = (θᵀ, γᵀ)ᵀ` with `θ` the first `d` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSplit {
    beta: Vec<f64>,
    d: usize,
}

impl ParamSplit {
    pub fn new(beta: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || d >= beta.len() {
            return Err(Error::InvalidInput(format!(
                "split point d = {d} must lie in 1..{}",
                beta.len()
            )));
        }
        Ok(Self { beta, d })
    }

    pub fn from_parts(theta: &[f64], gamma: &[f64]) -> Result<Self> {
        let mut beta = theta.to_vec();
        beta.extend_from_slice(gamma);
        Self::new(beta, theta.len())
    }

    pub fn zeros(p: usize, d: usize) -> Self {
        Self { beta: vec![0.0; p], d }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    pub fn theta(&self) -> &[f64] {
        &self.beta[..self.d]
    }
    pub fn gamma(&self) -> &[f64] {
        &self.beta[self.d..]
    }
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of nonzero coefficients.
    pub fn l0(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn with_theta(&self, theta: &[f64]) -> Self {
        let mut beta = self.beta.clone();
        beta[..self.d].copy_from_slice(theta);
        Self { beta, d: self.d }
    }
}

/// Weighted mean of `b(xᵢᵀβ) − yᵢ xᵢᵀβ` over `indices` (all rows when `None`).
/// `weights`, when given, runs parallel to the effective index list.
pub fn neg_loglik(
    family: &GlmFamily,
    data: &Dataset,
    beta: &ParamSplit,
    indices: Option<&[usize]>,
    weights: Option<&[f64]>,
) -> Result<f64> {
    if beta.beta().len() != data.p() {
        return Err(Error::InvalidInput("coefficient length differs from p".into()));
    }
    let all: Vec<usize>;
    let idx = match indices {
        Some(idx) => idx,
        None => {
            all = (0..data.n()).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(Error::DegenerateInput("empty index set".into()));
    }
    if let Some(w) = weights {
        if w.len() != idx.len() {
            return Err(Error::InvalidInput("weights must match the index set".into()));
        }
    }
    let mut total = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if i >= data.n() {
            return Err(Error::InvalidInput(format!("index {i} out of range")));
        }
        let eta = data.linear_predictor(i, beta.beta());
        let w = weights.map_or(1.0, |w| w[k]);
        total += w * (family.b(eta) - data.y()[i] * eta);
    }
    Ok(total / idx.len() as f64)
}
