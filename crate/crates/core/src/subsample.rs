//! Uniform Poisson subsampling.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{to_unit, SeedSpec};

/// Sorted, 0-based observation indices drawn with inclusion probability `r/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleIndex {
    indices: Vec<usize>,
    n: usize,
    r: f64,
}

impl SubsampleIndex {
    /// Every observation, `r = n`.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            n,
            r: n as f64,
        }
    }

    /// Wraps an explicit index set; `indices` must be strictly increasing and below `n`.
    pub fn from_indices(indices: Vec<usize>, n: usize, r: f64) -> Result<Self> {
        check_rate(n, r)?;
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidInput("indices must be strictly increasing and < n".into()));
        }
        Ok(Self { indices, n, r })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn n(&self) -> usize {
        self.n
    }
    /// Expected subsample size.
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn inclusion_probability(&self) -> f64 {
        self.r / self.n as f64
    }

    pub(crate) fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.indices.is_empty() || self.r <= 0.0 {
            return Err(Error::DegenerateInput(format!("{what}: empty subsample")));
        }
        Ok(())
    }
}

fn check_rate(n: usize, r: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("population size must be positive".into()));
    }
    if !(r >= 0.0 && r <= n as f64) {
        return Err(Error::InvalidInput(format!("expected size r = {r} must lie in [0, {n}]")));
    }
    Ok(())
}

/// Observation `i` is kept when the `i`-th uniform of the stream is below `r/n`.
pub fn poisson_subsample(n: usize, r: f64, seed: SeedSpec) -> Result<SubsampleIndex> {
    check_rate(n, r)?;
    let prob = r / n as f64;
    Ok(SubsampleIndex {
        indices: select_range(0..n, prob, seed),
        n,
        r,
    })
}

/// Same draw as [`poisson_subsample`], generated over parallel blocks.
pub fn poisson_subsample_blocked(n: usize, r: f64, seed: SeedSpec, block: usize) -> Result<SubsampleIndex> {
    check_rate(n, r)?;
    let prob = r / n as f64;
    let block = block.max(1);
    let starts: Vec<usize> = (0..n).step_by(block).collect();
    let parts: Vec<Vec<usize>> = starts
        .par_iter()
        .map(|&s| select_range(s..(s + block).min(n), prob, seed))
        .collect();
    Ok(SubsampleIndex {
        indices: parts.concat(),
        n,
        r,
    })
}

fn select_range(range: Range<usize>, prob: f64, seed: SeedSpec) -> Vec<usize> {
    let stream = seed.rng();
    range.filter(|&i| to_unit(stream.value_at(i as u64)) < prob).collect()
}
