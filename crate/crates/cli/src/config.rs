use std::path::{Path, PathBuf};

use biosession::clustering::ClusterConfig;
use biosession::features::FeatureConfig;
use biosession::preprocess::PreprocessConfig;
use biosession::stats::VIF_THRESHOLD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Which feature segments are computed and exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    Session,
    Scenario,
    Both,
}

impl SegmentMode {
    pub fn session(self) -> bool {
        self != SegmentMode::Scenario
    }

    pub fn scenario(self) -> bool {
        self != SegmentMode::Session
    }
}

/// GLMs relating behavior (targets) to physiology (predictors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmPlan {
    /// Target variables. Integer-valued targets get a Poisson model,
    /// strictly positive ones a Gamma model.
    pub targets: Vec<String>,
    /// Predictor variables, screened by VIF and standardized before fitting.
    pub predictors: Vec<String>,
    pub vif_threshold: f64,
}

impl Default for GlmPlan {
    fn default() -> Self {
        GlmPlan {
            targets: biosession::session::RateKey::all().iter().map(|k| format!("{}_count", k.name())).collect(),
            predictors: ["HR_mean", "HR_sd", "RR_rmssd", "RR_lf_hf", "BF_mean", "BF_sd"].map(String::from).to_vec(),
            vif_threshold: VIF_THRESHOLD,
        }
    }
}

/// Which analyses run, and on which variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisPlan {
    /// Drop values beyond 3 SD of their variable before every test.
    pub remove_outliers: bool,
    /// Spearman with age and point-biserial with sex (F = 1).
    pub control: bool,
    /// Friedman across scenarios with Wilcoxon post-hoc, per age group.
    pub scenarios: bool,
    /// Friedman across session indices with Wilcoxon post-hoc, per age group.
    pub sessions: bool,
    /// Mann–Whitney comparisons between clusters.
    pub cluster_validation: bool,
    /// Variables tested. Empty means every physiological, behavioral and
    /// Likert variable (plus clinical scores for the control analyses).
    pub variables: Vec<String>,
    pub glm: Option<GlmPlan>,
}

impl Default for AnalysisPlan {
    fn default() -> Self {
        AnalysisPlan {
            remove_outliers: true,
            control: true,
            scenarios: true,
            sessions: true,
            cluster_validation: true,
            variables: Vec::new(),
            glm: Some(GlmPlan::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of session JSON files.
    pub input: Option<PathBuf>,
    /// Bundle directory.
    pub output: Option<PathBuf>,
    /// Master seed. It replaces the forest and embedding seeds below.
    pub seed: u64,
    pub alpha: f64,
    pub segments: SegmentMode,
    /// Share of failed sessions above which the run exits with status 3.
    pub max_failure_ratio: f64,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub analysis: AnalysisPlan,
    /// Clustering settings, including the k range.
    pub clustering: ClusterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            output: None,
            seed: 0,
            alpha: 0.05,
            segments: SegmentMode::Both,
            max_failure_ratio: 0.2,
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            analysis: AnalysisPlan::default(),
            clustering: ClusterConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies the master seed to every seeded stage and checks ranges.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.preprocess.rf_seed = self.seed;
        self.clustering.embedding.seed = self.seed;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.max_failure_ratio) {
            return Err(CliError::Usage("max_failure_ratio must lie in [0, 1]".into()));
        }
        if self.clustering.k_min < 2 || self.clustering.k_min > self.clustering.k_max {
            return Err(CliError::Usage(format!("bad k range {}..={}", self.clustering.k_min, self.clustering.k_max)));
        }
        self.preprocess.check().map_err(|e| CliError::Usage(e.to_string()))?;
        self.features.check(self.preprocess.target_rate_hz).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(self)
    }

    /// SHA-256 of the analysis-relevant configuration. Input and output
    /// paths are left out so that a bundle written elsewhere hashes the same.
    pub fn hash(&self) -> String {
        let stripped = PipelineConfig { input: None, output: None, ..self.clone() };
        let bytes = serde_json::to_vec(&stripped).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}
