//! Quantile helpers shared by the interval procedures.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

/// Lower empirical order statistic: the ⌈q·m⌉-th smallest of `sorted`
/// (1-based, clamped to `1..=m`). No interpolation.
pub fn order_statistic(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0, "order statistic of an empty sample");
    // guard against q·m landing a hair above an integer
    let k = ((q * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    sorted[k - 1]
}

pub fn sort_floats(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}
