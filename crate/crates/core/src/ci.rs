//! Confidence-interval output shared by every inference procedure.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    DvsMc,
    MultistepNormal,
    SimultaneousBoot,
    SimultaneousBootStudentized,
    /// Normal intervals around the plain subsampled score root.
    UniScoreNormal,
}

/// Per-coordinate estimates with interval bounds at level `1 − α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiSet {
    pub estimates: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub method: CiMethod,
}

impl CiSet {
    /// Symmetric intervals `estimate ± half_width`.
    pub fn symmetric(estimates: Vec<f64>, half_width: &[f64], level: f64, method: CiMethod) -> Self {
        let lower = estimates.iter().zip(half_width).map(|(e, h)| e - h).collect();
        let upper = estimates.iter().zip(half_width).map(|(e, h)| e + h).collect();
        Self {
            estimates,
            lower,
            upper,
            level,
            method,
        }
    }

    pub fn d(&self) -> usize {
        self.estimates.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    pub fn covers(&self, truth: &[f64]) -> Vec<bool> {
        truth
            .iter()
            .enumerate()
            .map(|(j, t)| self.lower[j] <= *t && *t <= self.upper[j])
            .collect()
    }

    /// CSV with header `coord,estimate,lower,upper`, coordinates 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coord,estimate,lower,upper\n");
        for j in 0..self.d() {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                j + 1,
                self.estimates[j],
                self.lower[j],
                self.upper[j]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_csv() {
        let ci = CiSet::symmetric(vec![1.0, -2.0], &[0.5, 0.25], 0.95, CiMethod::MultistepNormal);
        assert_eq!(ci.lower, vec![0.5, -2.25]);
        assert_eq!(ci.lengths(), vec![1.0, 0.5]);
        assert_eq!(ci.covers(&[1.4, -1.0]), vec![true, false]);
        assert_eq!(ci.to_csv(), "coord,estimate,lower,upper\n1,1.0,0.5,1.5\n2,-2.0,-2.25,-1.75\n");
    }
}
