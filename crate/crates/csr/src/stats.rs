//! Numeric statistics kernels: Pearson/Spearman correlation, R², linear
//! scaling and quantile summaries.
//!
//! All functions are total by design. Degenerate inputs (zero variance, fewer
//! than two usable pairs, non-finite intermediate results) map to the neutral
//! value stated on each function instead of raising errors, because during
//! evolution such cases are routine fitness events.

use serde::{Deserialize, Serialize};

/// Pearson correlation over pairs where both values are finite.
/// Returns 0 with fewer than 2 usable pairs, zero variance on either side,
/// or a non-finite result.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    // catch exactly constant inputs before the centered pass: rounding in the
    // mean would otherwise leave a tiny nonzero variance and a garbage ratio
    if pairs.iter().all(|p| p.0 == pairs[0].0) || pairs.iter().all(|p| p.1 == pairs[0].1) {
        return 0.0;
    }
    let nf = n as f64;
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    let r = cov / (var_a.sqrt() * var_b.sqrt());
    if r.is_finite() {
        r.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Squared Pearson correlation of model output and target, in [0, 1].
/// Rows with non-finite output or missing (non-finite) target are excluded;
/// degenerate cases yield 0.
pub fn r_squared(output: &[f64], target: &[f64]) -> f64 {
    let r = pearson(output, target);
    (r * r).clamp(0.0, 1.0)
}

/// Fractional (mid) ranks, ties averaged. Ranks start at 1.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // average of ranks i+1 ..= j+1
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of mid ranks.
/// Zero rank variance on either side yields 0.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    pearson(&mid_ranks(a), &mid_ranks(b))
}

/// Least-squares affine calibration of model output to the target:
/// returns `(a, b)` such that `a + b * output` matches the target's location
/// and scale. Pairs with a non-finite member are excluded. Zero output
/// variance gives `b = 0, a = mean(target)`.
pub fn linear_scale(output: &[f64], target: &[f64]) -> (f64, f64) {
    assert_eq!(output.len(), target.len());
    let pairs: Vec<(f64, f64)> = output
        .iter()
        .zip(target)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let nf = pairs.len() as f64;
    let mean_tgt = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    // as in `pearson`, exactly constant output must hit the degenerate branch
    // even when the rounded mean leaves a tiny nonzero variance
    if pairs.iter().all(|p| p.0 == pairs[0].0) {
        return (mean_tgt, 0.0);
    }
    let mean_out = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let (mut cov, mut var_out) = (0.0, 0.0);
    for (x, y) in &pairs {
        cov += (x - mean_out) * (y - mean_tgt);
        var_out += (x - mean_out) * (x - mean_out);
    }
    if var_out == 0.0 {
        return (mean_tgt, 0.0);
    }
    let b = cov / var_out;
    let a = mean_tgt - b * mean_out;
    (a, b)
}

/// Linearly interpolated quantile (the common "type 7" rule) of a sorted
/// slice; `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Box-plot statistics of a score group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub max: f64,
}

pub fn five_number_summary(values: &[f64]) -> FiveNumberSummary {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    FiveNumberSummary {
        min: sorted[0],
        lower_quartile: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        upper_quartile: quantile_sorted(&sorted, 0.75),
        max: *sorted.last().unwrap(),
    }
}
