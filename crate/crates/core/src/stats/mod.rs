//! Statistical procedures: rank tests, correlations, agreement, outlier
//! filtering, distribution diagnostics, collinearity screening and GLMs.

mod glm;
mod nonparam;
mod shapiro;
mod vif;

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use glm::{fit_glm, Family, GlmCoefficient, GlmError, GlmFit, GlmOptions};
pub use nonparam::{
    cohens_kappa, friedman, mann_whitney_u, mann_whitney_u_with, point_biserial, spearman, spearman_with, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with, AgreementBand, KappaResult, EXACT_MWU_MAX_TOTAL, EXACT_SPEARMAN_MAX_N, EXACT_WILCOXON_MAX_N,
};
pub use shapiro::{diagnostics, qq_normal, shapiro_wilk, DistributionDiagnostics};
pub use vif::{vif_filter, vif_values, VifReport, VIF_THRESHOLD};

use crate::numeric::{mean, sample_sd};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input has zero variance")]
    ConstantInput,
    #[error("only one group present")]
    SingleGroup,
    #[error("a group is too small: need at least {needed}, got {got}")]
    EmptyGroup { needed: usize, got: usize },
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateAgreement,
    #[error("block matrix has missing or ragged cells")]
    MissingCells,
    #[error("all paired differences are zero")]
    AllZeroDiffs,
    #[error("sample size {0} outside the supported range")]
    OutOfRange(usize),
    #[error("exact p-value requested for n = {n}; the limit is {limit}")]
    ExactTooLarge { n: usize, limit: usize },
    #[error("design needs more rows than columns and at least two columns (got {rows}×{cols})")]
    BadDesign { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticName {
    #[serde(rename = "rho")]
    Rho,
    #[serde(rename = "r_pb")]
    RPb,
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "chi2")]
    Chi2,
    W,
    Z,
    U,
}

impl StatisticName {
    pub fn as_str(self) -> &'static str {
        match self {
            StatisticName::Rho => "rho",
            StatisticName::RPb => "r_pb",
            StatisticName::Kappa => "kappa",
            StatisticName::Chi2 => "chi2",
            StatisticName::W => "W",
            StatisticName::Z => "Z",
            StatisticName::U => "U",
        }
    }
}

impl fmt::Display for StatisticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Exact,
    NormalApprox,
    /// A t or chi-square reference distribution.
    Asymptotic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal",
            Method::Asymptotic => "asymptotic",
        }
    }
}

/// How a p-value should be obtained. `Auto` picks the exact distribution
/// whenever the sample is under the test's enumeration limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PMode {
    #[default]
    Auto,
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic_name: StatisticName,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Group sizes for two-sample tests; empty otherwise.
    pub group_sizes: Vec<usize>,
    pub method: Method,
    /// Normal deviate, for tests that report one alongside their statistic.
    pub z: Option<f64>,
}

impl TestResult {
    fn new(statistic_name: StatisticName, statistic: f64, p_value: f64, n: usize, method: Method) -> Self {
        TestResult { statistic_name, statistic, p_value: p_value.clamp(0.0, 1.0), n, group_sizes: Vec::new(), method, z: None }
    }
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided p for a standard normal deviate.
pub(crate) fn normal_two_sided(z: f64) -> f64 {
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the groups of tied values (only groups larger than one).
pub(crate) fn tie_sizes(xs: &[f64]) -> Vec<usize> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            out.push(j - i + 1);
        }
        i = j + 1;
    }
    out
}

/// Σ (t³ − t) over tie groups.
pub(crate) fn tie_term(xs: &[f64]) -> f64 {
    tie_sizes(xs).iter().map(|t| (*t as f64).powi(3) - *t as f64).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFilter {
    pub kept: Vec<f64>,
    pub removed: Vec<usize>,
}

/// Drops values more than 3 SD (sample SD) from the mean, in one pass over
/// statistics of the full input.
pub fn remove_outliers(xs: &[f64]) -> Result<OutlierFilter, StatsError> {
    if xs.len() < 3 {
        return Err(StatsError::TooShort { needed: 3, got: xs.len() });
    }
    let m = mean(xs);
    let sd = sample_sd(xs);
    let mut out = OutlierFilter { kept: Vec::with_capacity(xs.len()), removed: Vec::new() };
    for (i, x) in xs.iter().enumerate() {
        if (x - m).abs() > 3.0 * sd {
            out.removed.push(i);
        } else {
            out.kept.push(*x);
        }
    }
    Ok(out)
}
