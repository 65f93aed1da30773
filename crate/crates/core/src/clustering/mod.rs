//! Unsupervised session profiling: variance screening, standardization, a
//! two-dimensional t-SNE embedding, k-means with silhouette/Davies–Bouldin
//! model selection, and per-cluster profiles with pairwise rank tests.
//!
//! Rows are observations (sessions) and every row has the same length.

mod kmeans;
mod tsne;

use serde::{Deserialize, Serialize};

pub use kmeans::{davies_bouldin, kmeans, select_k, silhouette, KMeans, KScore, KSelection};
pub use tsne::{tsne_embed, Embedding, EmbeddingConfig};

use crate::numeric::{fnv1a, mean, percentile, sample_sd, sample_variance};
use crate::stats::{mann_whitney_u, Method};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("need at least two columns")]
    TooFewColumns,
    #[error("rows have unequal lengths")]
    Ragged,
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("perplexity {perplexity} exceeds (n−1)/3 = {max:.3}")]
    PerplexityTooLarge { perplexity: f64, max: f64 },
    #[error("k = {k} is invalid for {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("k range {k_min}..={k_max} must lie within [2, {}]", .n.saturating_sub(1))]
    BadKRange { k_min: usize, k_max: usize, n: usize },
    #[error("{k} clusters cannot be scored for {n} points")]
    BadClusterCount { k: usize, n: usize },
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("every cluster is a singleton")]
    SingletonOnly,
    #[error("clusters {0} and {1} share a centroid")]
    CoincidentCentroids(usize, usize),
    #[error("expected {0} labels, got {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn width(rows: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(ClusterError::Ragged);
    }
    Ok(d)
}

/// Indices of the columns whose sample variance reaches the given
/// percentile of all column variances.
pub fn variance_filter(rows: &[Vec<f64>], pct: f64) -> Result<Vec<usize>, ClusterError> {
    let d = width(rows)?;
    if d < 2 {
        return Err(ClusterError::TooFewColumns);
    }
    if rows.len() < 2 {
        return Err(ClusterError::TooFewRows { needed: 2, got: rows.len() });
    }
    let vars: Vec<f64> = (0..d).map(|j| sample_variance(&column(rows, j))).collect();
    let cut = percentile(&vars, pct);
    Ok((0..d).filter(|j| vars[*j] >= cut).collect())
}

/// Column-wise z-score transform (sample SD).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Standardizer, ClusterError> {
        let d = width(rows)?;
        if rows.len() < 2 {
            return Err(ClusterError::TooFewRows { needed: 2, got: rows.len() });
        }
        let (mut means, mut sds) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for j in 0..d {
            let c = column(rows, j);
            let sd = sample_sd(&c);
            if !(sd > 0.0) {
                return Err(ClusterError::ZeroVariance(j));
            }
            means.push(mean(&c));
            sds.push(sd);
        }
        Ok(Standardizer { means, sds })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().enumerate().map(|(j, v)| (v - self.means[j]) / self.sds[j]).collect()).collect()
    }

    pub fn inverse(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().enumerate().map(|(j, v)| v * self.sds[j] + self.means[j]).collect()).collect()
    }
}

pub fn standardize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardizer), ClusterError> {
    let s = Standardizer::fit(rows)?;
    Ok((s.transform(rows), s))
}

/// Numeric stand-in for an opaque subject identifier: each distinct id maps
/// to a hash in [0, 1). The column carries no metric meaning; it only lets
/// sessions of one subject sit together. Standardize it with the rest.
pub fn subject_code(ids: &[&str]) -> Vec<f64> {
    ids.iter().map(|id| (fnv1a(id.as_bytes()) >> 11) as f64 / (1u64 << 53) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub embedding: EmbeddingConfig,
    pub variance_percentile: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    /// Add the hashed subject id as a clustering feature.
    pub include_subject_id: bool,
    /// Also report the scores in the standardized feature space.
    pub feature_space_scores: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            embedding: EmbeddingConfig::default(),
            variance_percentile: 50.0,
            k_min: 2,
            k_max: 8,
            restarts: 10,
            include_subject_id: true,
            feature_space_scores: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    pub embedding: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub k: usize,
    /// Final k-means inertia on the embedding (the "elbow" value).
    pub inertia: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub seed: u64,
    pub selection: KSelection,
    /// Columns of the input that survived the variance filter.
    pub kept_columns: Vec<usize>,
    /// (silhouette, Davies–Bouldin) of the same labels in feature space.
    pub feature_space: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Filter, standardize, embed, choose k on the embedding and cluster.
pub fn fit_cluster_model(rows: &[Vec<f64>], cfg: &ClusterConfig) -> Result<ClusterModel, ClusterError> {
    let kept = variance_filter(rows, cfg.variance_percentile)?;
    let reduced: Vec<Vec<f64>> = rows.iter().map(|r| kept.iter().map(|j| r[*j]).collect()).collect();
    let (z, _) = standardize(&reduced)?;
    let emb = tsne_embed(&z, &cfg.embedding)?;
    let seed = cfg.embedding.seed;
    let selection = select_k(&emb.points, cfg.k_min, cfg.k_max, cfg.restarts, seed)?;
    let km = kmeans(&emb.points, selection.k_best, cfg.restarts, seed)?;
    let feature_space = if cfg.feature_space_scores {
        Some((silhouette(&z, &km.labels)?, davies_bouldin(&z, &km.labels).unwrap_or(f64::INFINITY)))
    } else {
        None
    };
    Ok(ClusterModel {
        silhouette: silhouette(&emb.points, &km.labels)?,
        davies_bouldin: davies_bouldin(&emb.points, &km.labels).unwrap_or(f64::INFINITY),
        embedding: emb.points,
        labels: km.labels,
        k: selection.k_best,
        inertia: km.inertia,
        seed,
        selection,
        kept_columns: kept,
        feature_space,
        warnings: emb.warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairComparison {
    pub cluster_a: usize,
    pub cluster_b: usize,
    /// `None` when a cluster is too small for the test.
    pub u: Option<f64>,
    pub p: Option<f64>,
    pub method: Option<Method>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureProfile {
    pub feature: String,
    /// (mean, sample SD) per cluster, indexed by cluster id.
    pub per_cluster: Vec<(f64, f64)>,
    pub comparisons: Vec<PairComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterProfile {
    pub sizes: Vec<usize>,
    /// One entry per feature, in input order.
    pub features: Vec<FeatureProfile>,
    pub alpha: f64,
}

/// Per-cluster mean (SD) of every feature column and Mann–Whitney tests for
/// every cluster pair. `columns[f]` holds feature `f` for every row.
pub fn cluster_profile(labels: &[usize], names: &[String], columns: &[Vec<f64>], alpha: f64) -> Result<ClusterProfile, ClusterError> {
    let n = labels.len();
    if names.len() != columns.len() {
        return Err(ClusterError::LengthMismatch(columns.len(), names.len()));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(ClusterError::LengthMismatch(n, c.len()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0; k];
    for l in labels {
        sizes[*l] += 1;
    }
    if let Some(c) = sizes.iter().position(|s| *s == 0) {
        return Err(ClusterError::EmptyCluster(c));
    }
    let features = names
        .iter()
        .zip(columns)
        .map(|(name, col)| {
            let groups: Vec<Vec<f64>> = (0..k).map(|c| labels.iter().zip(col).filter(|(l, _)| **l == c).map(|(_, v)| *v).collect()).collect();
            let per_cluster = groups.iter().map(|g| (mean(g), sample_sd(g))).collect();
            let mut comparisons = Vec::new();
            for a in 0..k {
                for b in a + 1..k {
                    let (u, p, method) = match mann_whitney_u(&groups[a], &groups[b]) {
                        Ok(t) => (Some(t.statistic), Some(t.p_value), Some(t.method)),
                        Err(_) => (None, None, None),
                    };
                    comparisons.push(PairComparison { cluster_a: a, cluster_b: b, u, p, method, significant: p.is_some_and(|p| p < alpha) });
                }
            }
            FeatureProfile { feature: name.clone(), per_cluster, comparisons }
        })
        .collect();
    Ok(ClusterProfile { sizes, features, alpha })
}

#[cfg(test)]
mod tests;
