//! Wilcoxon rank-sum test and Cliff's delta.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest combined sample size for which tie-free inputs get an exact p.
pub const EXACT_MAX_N: usize = 12;

pub const NEGLIGIBLE_BELOW: f64 = 0.147;
pub const SMALL_BELOW: f64 = 0.33;
pub const MEDIUM_BELOW: f64 = 0.474;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptyInput,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("effect size {0} outside [-1, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Mann-Whitney U of the first sample.
    pub u_statistic: f64,
    pub z: Option<f64>,
    pub p_two_sided: f64,
    pub method: TestMethod,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectCategory {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectCategory {
    pub const ALL: [EffectCategory; 4] = [Self::Negligible, Self::Small, Self::Medium, Self::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negligible => "Negligible",
            Self::Small => "Small",
            Self::Medium => "Medium",
            Self::Large => "Large",
        }
    }
}

impl std::fmt::Display for EffectCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub delta: f64,
    pub category: EffectCategory,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Midranks (1-based) of `values` plus the sizes of each tie group.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Number of size-`k` subsets of {1..n} with each rank sum.
fn rank_sum_counts(n: usize, k: usize) -> Vec<Vec<u64>> {
    let max_sum = n * (n + 1) / 2;
    // counts[j][s]: subsets of size j with sum s among the ranks seen so far.
    let mut counts = vec![vec![0u64; max_sum + 1]; k + 1];
    counts[0][0] = 1;
    for r in 1..=n {
        for j in (1..=k.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                counts[j][s] += counts[j - 1][s - r];
            }
        }
    }
    counts
}

fn exact_p(u: f64, n1: usize, n2: usize) -> f64 {
    let n = n1 + n2;
    let counts = rank_sum_counts(n, n1);
    let offset = n1 * (n1 + 1) / 2;
    let total: u64 = counts[n1].iter().sum();
    let (mut low, mut high) = (0u64, 0u64);
    for (s, &c) in counts[n1].iter().enumerate().skip(offset) {
        let us = (s - offset) as f64;
        if us <= u {
            low += c;
        }
        if us >= u {
            high += c;
        }
    }
    (2.0 * low.min(high) as f64 / total as f64).min(1.0)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test.
///
/// Exact when the combined size is at most [`EXACT_MAX_N`] and there are
/// no ties; otherwise a normal approximation with tie-corrected variance
/// and continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    rank_sum(a, b, false)
}

/// The rank-sum test forced onto the normal approximation.
pub fn rank_sum_normal_approx(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    rank_sum(a, b, true)
}

fn rank_sum(a: &[f64], b: &[f64], force_normal: bool) -> Result<TestResult, StatsError> {
    check(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    if !force_normal && n <= EXACT_MAX_N && ties.is_empty() {
        return Ok(TestResult {
            u_statistic: u,
            z: None,
            p_two_sided: exact_p(u, n1, n2),
            method: TestMethod::Exact,
            n1,
            n2,
        });
    }
    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let mu = f1 * f2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let sigma = (f1 * f2 / 12.0 * ((nf + 1.0) - tie_term)).max(0.0).sqrt();
    let corrected = (u - mu).abs() - 0.5;
    let (z, p) = if sigma == 0.0 || corrected <= 0.0 {
        (0.0, 1.0)
    } else {
        let z = corrected / sigma * (u - mu).signum();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (z, (2.0 * normal.sf(z.abs())).min(1.0))
    };
    Ok(TestResult { u_statistic: u, z: Some(z), p_two_sided: p, method: TestMethod::NormalApprox, n1, n2 })
}

/// Hess thresholds applied to |delta|, lower bounds inclusive.
pub fn categorize_effect(delta: f64) -> Result<EffectCategory, StatsError> {
    let m = delta.abs();
    if m.is_nan() || m > 1.0 {
        return Err(StatsError::OutOfRange(delta));
    }
    Ok(if m < NEGLIGIBLE_BELOW {
        EffectCategory::Negligible
    } else if m < SMALL_BELOW {
        EffectCategory::Small
    } else if m < MEDIUM_BELOW {
        EffectCategory::Medium
    } else {
        EffectCategory::Large
    })
}

/// `(#{a > b} − #{a < b}) / (n1·n2)` in O((n1 + n2) log n2).
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    check(a, b)?;
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&y| y < x) as i64;
        let above = (sorted.len() - sorted.partition_point(|&y| y <= x)) as i64;
        dominance += below - above;
    }
    let delta = dominance as f64 / (a.len() * b.len()) as f64;
    Ok(EffectSize { delta, category: categorize_effect(delta)? })
}
