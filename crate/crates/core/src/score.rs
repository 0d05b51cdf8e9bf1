//! The decorrelated score for the interest block and its Newton solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{dot, Dataset, GlmFamily};
use crate::lasso::PilotFit;
use crate::linalg::{max_abs, solve};
use crate::subsample::SubsampleIndex;

const SCORE_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Per-row quantities that do not depend on `θ`: the offset `γᵀuᵢ` and the
/// decorrelated direction `z̃ᵢ = zᵢ − Wuᵢ`.
#[derive(Debug, Clone)]
pub struct DecorrelatedDesign {
    d: usize,
    offset: Vec<f64>,
    ztilde: Vec<f64>,
}

impl DecorrelatedDesign {
    pub fn new(data: &Dataset, gamma: &[f64], w: &DMatrix<f64>) -> Result<Self> {
        let (p, d) = (data.p(), data.d());
        if gamma.len() != p - d || w.nrows() != d || w.ncols() != p - d {
            return Err(Error::InvalidInput(format!(
                "nuisance shapes do not match data: γ has {}, W is {}×{}, expected {} and {}×{}",
                gamma.len(),
                w.nrows(),
                w.ncols(),
                p - d,
                d,
                p - d
            )));
        }
        let rows: Vec<Vec<f64>> = (0..d).map(|k| w.row(k).iter().copied().collect()).collect();
        let mut offset = Vec::with_capacity(data.n());
        let mut ztilde = Vec::with_capacity(data.n() * d);
        for i in 0..data.n() {
            let u = data.u(i);
            offset.push(dot(gamma, u));
            for (k, row) in rows.iter().enumerate() {
                ztilde.push(data.z(i)[k] - dot(row, u));
            }
        }
        Ok(Self { d, offset, ztilde })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offset[i]
    }

    pub fn ztilde(&self, i: usize) -> &[f64] {
        &self.ztilde[i * self.d..(i + 1) * self.d]
    }
}

/// Family, data and a fixed decorrelated design; evaluates the score in `θ`.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub family: &'a GlmFamily,
    pub data: &'a Dataset,
    pub design: DecorrelatedDesign,
}

impl<'a> ScoreContext<'a> {
    pub fn new(family: &'a GlmFamily, data: &'a Dataset, gamma: &[f64], w: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            family,
            data,
            design: DecorrelatedDesign::new(data, gamma, w)?,
        })
    }

    /// Context at the pilot nuisance estimates `(γ̂ₚ, Ŵₚ)`.
    pub fn for_pilot(family: &'a GlmFamily, data: &'a Dataset, pilot: &PilotFit) -> Result<Self> {
        Self::new(family, data, pilot.beta_p.gamma(), &pilot.w_p)
    }

    pub fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        dot(theta, self.data.z(i)) + self.design.offset(i)
    }

    /// Rows and per-row weights: every row with weight 1, or the subsample
    /// with weight `n/r`. Results are divided by `n` in both cases.
    fn rows<'s>(&'s self, sub: Option<&'s SubsampleIndex>) -> (Box<dyn Iterator<Item = usize> + 's>, f64) {
        match sub {
            None => (Box::new(0..self.data.n()), 1.0),
            Some(s) => (Box::new(s.indices().iter().copied()), s.n() as f64 / s.r()),
        }
    }

    /// `S(θ) = (1/n)Σ wᵢ(b'(θᵀzᵢ + γᵀuᵢ) − yᵢ)z̃ᵢ`.
    pub fn score(&self, theta: &[f64], sub: Option<&SubsampleIndex>) -> DVector<f64> {
        let d = self.design.d();
        let (rows, weight) = self.rows(sub);
        let mut out = DVector::zeros(d);
        for i in rows {
            let g = weight * (self.family.b1(self.eta(i, theta)) - self.data.y()[i]);
            for (o, zt) in out.iter_mut().zip(self.design.ztilde(i)) {
                *o += g * zt;
            }
        }
        out / self.data.n() as f64
    }

    /// `∂S/∂θ = (1/n)Σ wᵢ b''(ηᵢ) z̃ᵢ zᵢᵀ`.
    pub fn score_jacobian_theta(&self, theta: &[f64], sub: Option<&SubsampleIndex>) -> DMatrix<f64> {
        let d = self.design.d();
        let (rows, weight) = self.rows(sub);
        let mut out = DMatrix::zeros(d, d);
        for i in rows {
            let h = weight * self.family.b2(self.eta(i, theta));
            let (zt, z) = (self.design.ztilde(i), self.data.z(i));
            for a in 0..d {
                let s = h * zt[a];
                for b in 0..d {
                    out[(a, b)] += s * z[b];
                }
            }
        }
        out / self.data.n() as f64
    }

    /// Damped Newton iteration for `S*(θ) = 0` over the subsample.
    /// Returns the root and the number of Newton steps taken.
    pub fn solve_subsampled_score(&self, sub: &SubsampleIndex, init: &[f64]) -> Result<(Vec<f64>, usize)> {
        sub.require_nonempty("subsampled score")?;
        let mut theta = init.to_vec();
        let mut s = self.score(&theta, Some(sub));
        let mut norm = max_abs(s.iter().copied());
        for iter in 0..MAX_NEWTON {
            if norm < SCORE_TOL {
                return Ok((theta, iter));
            }
            let jac = self.score_jacobian_theta(&theta, Some(sub));
            let step = solve(&jac, &s, "subsampled score Jacobian")?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t - scale * d).collect();
                let cs = self.score(&cand, Some(sub));
                let cn = max_abs(cs.iter().copied());
                if cn.is_finite() && cn < norm {
                    theta = cand;
                    s = cs;
                    norm = cn;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // rounding floor: no representable decrease remains
                if norm < 1e-8 {
                    return Ok((theta, iter + 1));
                }
                return Err(Error::Convergence {
                    what: "subsampled score",
                    iterations: iter + 1,
                    residual: norm,
                });
            }
        }
        if norm < SCORE_TOL {
            return Ok((theta, MAX_NEWTON));
        }
        Err(Error::Convergence {
            what: "subsampled score",
            iterations: MAX_NEWTON,
            residual: norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, p: usize, d: usize, seed: u64, logistic: bool) -> Dataset {
        let mut rng = SeedSpec::new(seed, 9).rng();
        let x: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n)
            .map(|i| {
                let eta = 0.8 * x[i * p] - 0.4 * x[i * p + 1];
                if logistic {
                    f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
                } else {
                    eta + rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        Dataset::new(x, y, p, d).unwrap()
    }

    fn nuisance(p: usize, d: usize) -> (Vec<f64>, DMatrix<f64>) {
        let gamma = (0..p - d).map(|j| 0.1 * (j as f64 + 1.0)).collect();
        let w = DMatrix::from_fn(d, p - d, |a, b| 0.05 * (a as f64 - b as f64));
        (gamma, w)
    }

    #[test]
    fn scalar_example() {
        // n = 2, d = 1, no nuisance contribution
        let x = vec![1.0, 0.0, 2.0, 0.0];
        let data = Dataset::new(x, vec![1.0, 3.0], 2, 1).unwrap();
        let fam = GlmFamily::gaussian();
        let ctx = ScoreContext::new(&fam, &data, &[0.0], &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(ctx.score(&[0.0], None)[0], -3.5);
        let sub = SubsampleIndex::full(2);
        let (root, _) = ctx.solve_subsampled_score(&sub, &[0.0]).unwrap();
        assert!((root[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn full_subsample_matches_full_score_bitwise() {
        let data = data(50, 5, 2, 1, true);
        let (g, w) = nuisance(5, 2);
        let fam = GlmFamily::logistic();
        let ctx = ScoreContext::new(&fam, &data, &g, &w).unwrap();
        let theta = [0.3, -0.2];
        let full = SubsampleIndex::full(50);
        assert_eq!(ctx.score(&theta, None), ctx.score(&theta, Some(&full)));
    }

    #[test]
    fn solver_reaches_root() {
        for seed in 0..10 {
            let data = data(300, 6, 2, seed, true);
            let (g, w) = nuisance(6, 2);
            let fam = GlmFamily::logistic();
            let ctx = ScoreContext::new(&fam, &data, &g, &w).unwrap();
            let sub = crate::subsample::poisson_subsample(300, 150.0, SeedSpec::new(seed, 2)).unwrap();
            let (root, _) = ctx.solve_subsampled_score(&sub, &[0.0, 0.0]).unwrap();
            assert!(max_abs(ctx.score(&root, Some(&sub)).iter().copied()) < 1e-10);
        }
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let x = vec![1.0, 1.0, 0.0, 2.0, 2.0, 0.0, 3.0, 3.0, 0.0];
        let data = Dataset::new(x, vec![1.0, 2.0, 3.0], 3, 2).unwrap();
        let fam = GlmFamily::gaussian();
        let ctx = ScoreContext::new(&fam, &data, &[0.0], &DMatrix::zeros(2, 1)).unwrap();
        let err = ctx.solve_subsampled_score(&SubsampleIndex::full(3), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn jacobian_matches_finite_differences(seed in 0u64..1000, t0 in -1.0f64..1.0, t1 in -1.0f64..1.0) {
            let data = data(40, 5, 2, seed, seed % 2 == 0);
            let (g, w) = nuisance(5, 2);
            let fam = if seed % 2 == 0 { GlmFamily::logistic() } else { GlmFamily::gaussian() };
            let ctx = ScoreContext::new(&fam, &data, &g, &w).unwrap();
            let theta = [t0, t1];
            let jac = ctx.score_jacobian_theta(&theta, None);
            let h = 1e-6;
            for b in 0..2 {
                let mut plus = theta;
                let mut minus = theta;
                plus[b] += h;
                minus[b] -= h;
                let fd = (ctx.score(&plus, None) - ctx.score(&minus, None)) / (2.0 * h);
                for a in 0..2 {
                    prop_assert!((fd[a] - jac[(a, b)]).abs() < 1e-6 * (1.0 + jac[(a, b)].abs()));
                }
            }
        }
    }
}
