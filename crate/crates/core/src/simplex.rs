//! Probability-simplex helpers.

use alloc::vec::Vec;

/// Euclidean projection of `v` onto `{p ≥ 0, Σ p = 1}` (sort-and-threshold).
pub fn project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Remove rounding drift so rows pass the 1e-9 normalization checks exactly.
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for p in &mut out {
            *p /= total;
        }
    }
    out
}

/// Index drawn from `probs` given a uniform variate `u ∈ [0, 1)`.
pub fn sample_with(probs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    last_positive
}

/// Index drawn from `probs` with `rng`.
pub fn sample<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    sample_with(probs, rng.gen::<f64>())
}
