//! Numerical statistics used by the attacks and the evaluation.
//!
//! Rank tests work on doubled midranks so that tied ranks stay integral and
//! exact null distributions can be counted without floating-point sums.
//!
//! Exactness regime:
//! * Wilcoxon signed-rank: exact for up to [`WILCOXON_EXACT_MAX`] non-zero
//!   differences (ties allowed), normal approximation with tie and
//!   continuity correction above.
//! * Mann-Whitney U: exact when `n_a + n_b <= MANN_WHITNEY_EXACT_MAX` and the
//!   pooled sample has no ties, normal approximation otherwise.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const WILCOXON_EXACT_MAX: usize = 20;
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("variance must be positive, got {0}")]
    Variance(f64),
    #[error("empty sample")]
    Empty,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("hypergeometric parameters out of range: N={population}, K={successes}, n={draws}")]
    Hypergeometric { population: u64, successes: u64, draws: u64 },
    #[error("exact test unavailable: {0}")]
    ExactUnavailable(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApproximation,
}

/// Which null distribution to use; `Auto` applies the documented cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub alternative: Alternative,
    /// Observations that entered the test (non-zero differences, or `n_a + n_b`).
    pub n: usize,
    /// No information in the data (all differences zero, or all values tied).
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

pub fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> Result<f64, StatsError> {
    Ok(gaussian_log_pdf(x, mean, variance)?.exp())
}

pub fn gaussian_log_pdf(x: f64, mean: f64, variance: f64) -> Result<f64, StatsError> {
    if !(variance > 0.0) {
        return Err(StatsError::Variance(variance));
    }
    let d = x - mean;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * variance).ln() - d * d / (2.0 * variance))
}

/// Mean and unbiased variance, floored at `floor`. One sample gets `floor`.
pub fn fit_gaussian(samples: &[f64], floor: f64) -> Result<GaussianFit, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = if samples.len() < 2 {
        floor
    } else {
        let ss: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).max(floor)
    };
    Ok(GaussianFit {
        mean,
        variance,
        count: samples.len(),
    })
}

/// `E[|A ∩ B|] = n K / N` for a draw of `n` items from `N` containing `K` successes.
pub fn hypergeom_expected(population: u64, successes: u64, draws: u64) -> Result<f64, StatsError> {
    if successes > population || draws > population {
        return Err(StatsError::Hypergeometric {
            population,
            successes,
            draws,
        });
    }
    if population == 0 {
        return Ok(0.0);
    }
    Ok(draws as f64 * successes as f64 / population as f64)
}

/// Doubled midranks (`2 * rank`) and the tie-group sizes.
pub(crate) fn doubled_midranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, doubled average = start + 1 + end
        let r2 = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r2;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// p-value from a normal approximation with continuity correction 0.5.
fn normal_p(statistic: f64, mean: f64, variance: f64, alternative: Alternative) -> f64 {
    if !(variance > 0.0) {
        return 1.0;
    }
    let sd = variance.sqrt();
    let n = standard_normal();
    let p = match alternative {
        Alternative::Greater => n.sf((statistic - mean - 0.5) / sd),
        Alternative::Less => n.cdf((statistic - mean + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((statistic - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * n.sf(z)
        }
    };
    p.clamp(0.0, 1.0)
}

/// Tail probabilities `(P[S >= obs], P[S <= obs])` of a counted distribution.
fn tails(counts: &[u64], observed: usize, total: f64) -> (f64, f64) {
    let upper: u64 = counts[observed.min(counts.len())..].iter().sum();
    let lower: u64 = counts[..=observed.min(counts.len() - 1)].iter().sum();
    (upper as f64 / total, lower as f64 / total)
}

fn pick(alternative: Alternative, (upper, lower): (f64, f64)) -> f64 {
    match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

pub fn wilcoxon_signed_rank(samples: &[f64], mu0: f64, alternative: Alternative) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(samples, mu0, alternative, MethodChoice::Auto)
}

/// Signed-rank test of `samples - mu0`; the statistic is `W+`, the sum of
/// ranks of positive differences. Zero differences are dropped.
pub fn wilcoxon_signed_rank_with(
    samples: &[f64],
    mu0: f64,
    alternative: Alternative,
    choice: MethodChoice,
) -> Result<TestResult, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let diffs: Vec<f64> = samples.iter().map(|x| x - mu0).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = diffs.len();
    let exact = match choice {
        MethodChoice::Auto => n <= WILCOXON_EXACT_MAX,
        MethodChoice::Exact => {
            if n > 62 {
                return Err(StatsError::ExactUnavailable(format!("{n} differences")));
            }
            true
        }
        MethodChoice::Normal => false,
    };
    let method = if exact { Method::Exact } else { Method::NormalApproximation };
    if n == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method,
            alternative,
            n,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_midranks(&abs);
    let w2: u64 = ranks2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let statistic = w2 as f64 / 2.0;

    let p_value = if exact {
        // counts[s] = number of sign assignments with doubled W+ equal to s
        let total2: u64 = ranks2.iter().sum();
        let mut counts = vec![0u64; total2 as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let denom = 2f64.powi(n as i32);
        pick(alternative, tails(&counts, w2 as usize, denom))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        normal_p(statistic, mean, variance, alternative)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method,
        alternative,
        n,
        degenerate: false,
    })
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(a, b, alternative, MethodChoice::Auto)
}

/// Rank-sum test; the statistic is `U_A = R_A - n_a (n_a + 1) / 2` with
/// midranks. `Greater` means `a` tends to exceed `b`.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alternative: Alternative, choice: MethodChoice) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks2, ties) = doubled_midranks(&pooled);
    let has_ties = ties.iter().any(|&t| t > 1);
    let r2a: u64 = ranks2[..na].iter().sum();
    let u2 = r2a - (na * (na + 1)) as u64;
    let statistic = u2 as f64 / 2.0;
    let exact = match choice {
        MethodChoice::Auto => n <= MANN_WHITNEY_EXACT_MAX && !has_ties,
        MethodChoice::Exact => {
            if has_ties || n > 60 {
                return Err(StatsError::ExactUnavailable("ties or sample too large".into()));
            }
            true
        }
        MethodChoice::Normal => false,
    };
    let degenerate = ties.len() == 1;
    let p_value = if exact {
        let u = (u2 / 2) as usize;
        let counts = rank_sum_subset_counts(n, na);
        let total: u64 = counts.iter().sum();
        pick(alternative, tails(&counts, u, total as f64))
    } else {
        let (fa, fb, fnn) = (na as f64, nb as f64, n as f64);
        let mean = fa * fb / 2.0;
        let correction = if n > 1 { tie_sum(&ties) / (fnn * (fnn - 1.0)) } else { 0.0 };
        let variance = fa * fb / 12.0 * ((fnn + 1.0) - correction);
        normal_p(statistic, mean, variance, alternative)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method: if exact { Method::Exact } else { Method::NormalApproximation },
        alternative,
        n,
        degenerate,
    })
}

/// `counts[u]` = number of size-`k` subsets of ranks `1..=n` whose U statistic is `u`.
fn rank_sum_subset_counts(n: usize, k: usize) -> Vec<u64> {
    // table[j][s]: subsets of size j with rank sum s, over ranks seen so far
    let max_sum = n * (n + 1) / 2;
    let mut table = vec![vec![0u64; max_sum + 1]; k + 1];
    table[0][0] = 1;
    for r in 1..=n {
        for j in (1..=k.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                let add = table[j - 1][s - r];
                if add != 0 {
                    table[j][s] += add;
                }
            }
        }
    }
    let offset = k * (k + 1) / 2;
    table[k][offset..=(offset + k * (n - k)).min(max_sum)].to_vec()
}
