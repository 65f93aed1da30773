//! Rank correlations, agreement and rank-based hypothesis tests.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use super::{average_ranks, normal_two_sided, std_normal, tie_term, Alternative, Method, PMode, StatisticName, StatsError, TestResult};
use crate::numeric::pearson;

/// Largest n for which Spearman's p is computed by full permutation.
pub const EXACT_SPEARMAN_MAX_N: usize = 8;
/// Largest number of non-zero pairs for the exact signed-rank distribution.
pub const EXACT_WILCOXON_MAX_N: usize = 12;
/// Largest m + n for the exact rank-sum distribution.
pub const EXACT_MWU_MAX_TOTAL: usize = 14;

fn t_two_sided(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::TooShort { needed: min, got: x.len() });
    }
    Ok(())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    spearman_with(x, y, PMode::Auto)
}

/// Spearman's rho: Pearson correlation of average ranks. The p-value comes
/// from all n! rank permutations when n is small, else a t approximation.
pub fn spearman_with(x: &[f64], y: &[f64], mode: PMode) -> Result<TestResult, StatsError> {
    check_pair(x, y, 4)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    if rho.is_nan() {
        return Err(StatsError::ConstantInput);
    }
    let n = x.len();
    let exact = match mode {
        PMode::Auto => n <= EXACT_SPEARMAN_MAX_N,
        PMode::Exact if n > EXACT_SPEARMAN_MAX_N => {
            return Err(StatsError::ExactTooLarge { n, limit: EXACT_SPEARMAN_MAX_N })
        }
        PMode::Exact => true,
        PMode::Approx => false,
    };
    let (p, method) = if exact {
        (spearman_permutation_p(&rx, &ry, rho), Method::Exact)
    } else {
        (t_two_sided(rho, n), Method::Asymptotic)
    };
    Ok(TestResult::new(StatisticName::Rho, rho, p, n, method))
}

/// Share of permutations of `ry` whose |rho| reaches the observed one
/// (Heap's algorithm over positions).
fn spearman_permutation_p(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut c = vec![0usize; n];
    let target = observed.abs() - 1e-12;
    let mut hits = u64::from(pearson(rx, &perm).abs() >= target);
    let mut total = 1u64;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            hits += u64::from(pearson(rx, &perm).abs() >= target);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Point-biserial correlation: Pearson correlation with `group` coded 0/1
/// (`true` = 1), tested against t with n − 2 df.
pub fn point_biserial(group: &[bool], y: &[f64]) -> Result<TestResult, StatsError> {
    if group.len() != y.len() {
        return Err(StatsError::LengthMismatch(group.len(), y.len()));
    }
    if y.len() < 4 {
        return Err(StatsError::TooShort { needed: 4, got: y.len() });
    }
    let ones = group.iter().filter(|g| **g).count();
    if ones == 0 || ones == group.len() {
        return Err(StatsError::SingleGroup);
    }
    let coded: Vec<f64> = group.iter().map(|g| if *g { 1.0 } else { 0.0 }).collect();
    let r = pearson(&coded, y);
    if r.is_nan() {
        return Err(StatsError::ConstantInput);
    }
    let mut out = TestResult::new(StatisticName::RPb, r, t_two_sided(r, y.len()), y.len(), Method::Asymptotic);
    out.group_sizes = vec![group.len() - ones, ones];
    Ok(out)
}

/// Landis and Koch agreement bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgreementBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementBand {
    pub fn of(kappa: f64) -> Self {
        match kappa {
            k if k <= 0.0 => AgreementBand::Poor,
            k if k <= 0.20 => AgreementBand::Slight,
            k if k <= 0.40 => AgreementBand::Fair,
            k if k <= 0.60 => AgreementBand::Moderate,
            k if k <= 0.80 => AgreementBand::Substantial,
            _ => AgreementBand::AlmostPerfect,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgreementBand::Poor => "poor",
            AgreementBand::Slight => "slight",
            AgreementBand::Fair => "fair",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Substantial => "substantial",
            AgreementBand::AlmostPerfect => "almost perfect",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaResult {
    pub test: TestResult,
    pub observed_agreement: f64,
    pub chance_agreement: f64,
    pub band: AgreementBand,
}

/// Cohen's kappa for two raters. The p-value tests κ = 0 with the
/// large-sample variance under the null hypothesis.
pub fn cohens_kappa<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<KappaResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::TooShort { needed: 1, got: 0 });
    }
    let n = a.len() as f64;
    let mut row: BTreeMap<&T, f64> = BTreeMap::new();
    let mut col: BTreeMap<&T, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (x, y) in a.iter().zip(b) {
        *row.entry(x).or_default() += 1.0 / n;
        *col.entry(y).or_default() += 1.0 / n;
        if x == y {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let marg: Vec<(f64, f64)> = row
        .keys()
        .chain(col.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|k| (row.get(*k).copied().unwrap_or(0.0), col.get(*k).copied().unwrap_or(0.0)))
        .collect();
    let pe: f64 = marg.iter().map(|(r, c)| r * c).sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Err(StatsError::DegenerateAgreement);
    }
    let kappa = (po - pe) / (1.0 - pe);
    let cross: f64 = marg.iter().map(|(r, c)| r * c * (r + c)).sum();
    let var0 = (pe + pe * pe - cross) / (n * (1.0 - pe).powi(2));
    let (p, z) = if var0 > 0.0 {
        let z = kappa / var0.sqrt();
        (normal_two_sided(z), Some(z))
    } else {
        (1.0, None)
    };
    let mut test = TestResult::new(StatisticName::Kappa, kappa, p, a.len(), Method::NormalApprox);
    test.z = z;
    Ok(KappaResult { test, observed_agreement: po, chance_agreement: pe, band: AgreementBand::of(kappa) })
}

/// Friedman test on `blocks` (rows) × treatments (columns), with the usual
/// correction for ties within blocks. When every block is fully tied the
/// statistic is 0 and p is 1.
pub fn friedman(blocks: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    let n = blocks.len();
    if n < 2 {
        return Err(StatsError::TooShort { needed: 2, got: n });
    }
    let k = blocks[0].len();
    if k < 3 {
        return Err(StatsError::TooShort { needed: 3, got: k });
    }
    if blocks.iter().any(|b| b.len() != k || b.iter().any(|v| !v.is_finite())) {
        return Err(StatsError::MissingCells);
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for b in blocks {
        for (s, r) in rank_sums.iter_mut().zip(average_ranks(b)) {
            *s += r;
        }
        ties += tie_term(b);
    }
    let (nf, kf) = (n as f64, k as f64);
    let ssq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ssq - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    let (chi2, p) = if correction <= 1e-12 {
        (0.0, 1.0)
    } else {
        let chi2 = (raw / correction).max(0.0);
        (chi2, ChiSquared::new(kf - 1.0).expect("positive df").sf(chi2))
    };
    Ok(TestResult::new(StatisticName::Chi2, chi2, p, n, Method::Asymptotic))
}

/// Distribution of a sum of a random subset of `weights` where each item is
/// included independently with probability 1/2; returned as counts.
fn subset_sum_counts(weights: &[usize]) -> Vec<f64> {
    let total: usize = weights.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for w in weights {
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + w] += counts[s];
            }
        }
        reach += w;
    }
    counts
}

/// Tail probabilities P(S ≤ s) and P(S ≥ s) from counts.
fn tails(counts: &[f64], s: usize) -> (f64, f64) {
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=s].iter().sum();
    let upper: f64 = counts[s..].iter().sum();
    (lower / total, upper / total)
}

fn p_from_tails(lower: f64, upper: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    }
}

/// Normal-approximation p and deviate with a 0.5 continuity correction.
fn normal_p(stat: f64, mu: f64, sd: f64, alt: Alternative) -> (f64, f64) {
    if sd <= 0.0 {
        return (1.0, 0.0);
    }
    let d = stat - mu;
    let nd = std_normal();
    match alt {
        Alternative::TwoSided => {
            let z = -((d.abs() - 0.5).max(0.0)) / sd;
            ((2.0 * nd.cdf(z)).min(1.0), z)
        }
        Alternative::Greater => {
            let z = (d - 0.5) / sd;
            (nd.sf(z), z)
        }
        Alternative::Less => {
            let z = (d + 0.5) / sd;
            (nd.cdf(z), z)
        }
    }
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, Alternative::TwoSided, PMode::Auto)
}

/// Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; the statistic is the smaller of the two signed-rank sums and the
/// normal deviate is reported in `z`. `Greater` means x tends to exceed y.
pub fn wilcoxon_signed_rank_with(x: &[f64], y: &[f64], alt: Alternative, mode: PMode) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::AllZeroDiffs);
    }
    let n = d.len();
    if n < 5 {
        return Err(StatsError::TooShort { needed: 5, got: n });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let t_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = t_plus.min(total - t_plus);

    let exact = match mode {
        PMode::Auto => n <= EXACT_WILCOXON_MAX_N,
        PMode::Exact => true,
        PMode::Approx => false,
    };
    let mu = total / 2.0;
    let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - tie_term(&abs) / 48.0;
    let (p_approx, z) = normal_p(t_plus, mu, var.sqrt(), alt);
    let (p, method) = if exact {
        // Doubled ranks are integers even with ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = subset_sum_counts(&doubled);
        let (lower, upper) = tails(&counts, (2.0 * t_plus).round() as usize);
        (p_from_tails(lower, upper, alt), Method::Exact)
    } else {
        (p_approx, Method::NormalApprox)
    };
    let mut out = TestResult::new(StatisticName::W, w, p, n, method);
    out.z = Some(z);
    Ok(out)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(a, b, Alternative::TwoSided, PMode::Auto)
}

/// Mann–Whitney U. The statistic is min(U_a, U_b); `Greater` means `a`
/// tends to exceed `b`.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alt: Alternative, mode: PMode) -> Result<TestResult, StatsError> {
    for g in [a, b] {
        if g.len() < 3 {
            return Err(StatsError::EmptyGroup { needed: 3, got: g.len() });
        }
    }
    let (m, n) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let r_a: f64 = ranks[..m].iter().sum();
    let u_a = r_a - (m * (m + 1)) as f64 / 2.0;
    let mn = (m * n) as f64;
    let u = u_a.min(mn - u_a);

    let total = m + n;
    let exact = match mode {
        PMode::Auto => total <= EXACT_MWU_MAX_TOTAL,
        PMode::Exact => true,
        PMode::Approx => false,
    };
    let nf = total as f64;
    let var = mn / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    let (p_approx, z) = normal_p(u_a, mn / 2.0, var.max(0.0).sqrt(), alt);
    let (p, method) = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = rank_sum_counts(&doubled, m);
        let (lower, upper) = tails(&counts, (2.0 * r_a).round() as usize);
        (p_from_tails(lower, upper, alt), Method::Exact)
    } else {
        (p_approx, Method::NormalApprox)
    };
    let mut out = TestResult::new(StatisticName::U, u, p, total, method);
    out.group_sizes = vec![m, n];
    out.z = Some(z);
    Ok(out)
}

/// Counts of the summed weight over all subsets of exactly `size` items.
fn rank_sum_counts(weights: &[usize], size: usize) -> Vec<f64> {
    let total: usize = weights.iter().sum();
    // dp[k][s]: subsets of k items with weight s.
    let mut dp = vec![vec![0.0; total + 1]; size + 1];
    dp[0][0] = 1.0;
    for w in weights {
        for k in (1..=size).rev() {
            let (prev, cur) = dp.split_at_mut(k);
            for s in (*w..=total).rev() {
                cur[0][s] += prev[k - 1][s - w];
            }
        }
    }
    dp.swap_remove(size)
}
