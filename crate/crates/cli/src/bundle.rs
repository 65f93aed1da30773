//! Report bundle layout and writers.
//!
//! ```text
//! manifest.json      config hash, seeds, inputs, outputs (with SHA-256)
//! drop_log.csv       per-trace missing ratios, dropped traces, failed sessions
//! features.csv       one row per session segment
//! tests.csv          every statistical test
//! glm.json           GLM fits with diagnostics and VIF screening
//! clusters.csv       embedding coordinates and cluster labels
//! scores.csv         silhouette / Davies–Bouldin / inertia per k
//! plotdata/*.json    series behind the figures
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biosession::features::Feature;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{Clustering, TestRow};
use crate::config::PipelineConfig;
use crate::corpus::{Failure, Processed};
use crate::format::{cell, g6};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const FEATURES: &str = "features.csv";
pub const TESTS: &str = "tests.csv";
pub const GLM: &str = "glm.json";
pub const CLUSTERS: &str = "clusters.csv";
pub const SCORES: &str = "scores.csv";
pub const DROP_LOG: &str = "drop_log.csv";

/// Files a complete bundle must hold.
pub const REQUIRED: [&str; 7] = [MANIFEST, DROP_LOG, FEATURES, TESTS, GLM, CLUSTERS, SCORES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub rf_seed: u64,
    pub embedding_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub alpha: f64,
    pub sessions_total: usize,
    pub sessions_processed: usize,
    pub sessions_failed: usize,
    pub traces_dropped: usize,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub notes: Vec<String>,
    /// The resolved configuration, without input and output paths.
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Manifest {
            tool: concat!("biosession ", env!("CARGO_PKG_VERSION")).into(),
            command: command.into(),
            config_sha256: cfg.hash(),
            seeds: Seeds { seed: cfg.seed, rf_seed: cfg.preprocess.rf_seed, embedding_seed: cfg.clustering.embedding.seed },
            alpha: cfg.alpha,
            sessions_total: 0,
            sessions_processed: 0,
            sessions_failed: 0,
            traces_dropped: 0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            config: PipelineConfig { input: None, output: None, ..cfg.clone() },
        }
    }
}

/// Writes files under one directory and remembers their digests.
pub struct BundleWriter {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
        Ok(BundleWriter { dir: dir.to_path_buf(), written: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(format!("cannot create {}", parent.display())))?;
        }
        std::fs::write(&path, contents).map_err(CliError::io(format!("cannot write {}", path.display())))?;
        self.written.insert(name.to_string(), format!("{:x}", Sha256::digest(contents.as_bytes())));
        Ok(())
    }

    pub fn entries(&self) -> Vec<FileEntry> {
        self.written.iter().map(|(file, sha256)| FileEntry { file: file.clone(), sha256: sha256.clone() }).collect()
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
}

pub fn features_csv(processed: &[Processed]) -> String {
    let mut header = vec!["subject_id", "session_index", "segment", "duration_s"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    header.push("flags");
    let rows = processed.iter().flat_map(|p| {
        p.features.iter().map(move |v| {
            let mut r = vec![p.session.meta.subject_id.clone(), p.session.session_index.to_string(), v.segment.to_string(), g6(v.duration_s)];
            r.extend(Feature::ALL.iter().map(|f| cell(v.get(*f))));
            r.push(v.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";"));
            r
        })
    });
    csv_string(&header, rows)
}

pub fn drop_log_csv(processed: &[Processed], failures: &[Failure], threshold: f64) -> String {
    let header = ["file", "subject_id", "session_index", "signal", "missing_ratio", "action", "reason"];
    let mut rows = Vec::new();
    for p in processed {
        for r in &p.log().records {
            rows.push(vec![
                p.file.clone(),
                r.subject_id.clone(),
                r.session_index.to_string(),
                r.kind.to_string(),
                g6(r.missing_ratio),
                if r.dropped { "dropped" } else { "kept" }.into(),
                if r.dropped { format!("missing ratio above {}", g6(threshold)) } else { String::new() },
            ]);
        }
    }
    let mut failures = failures.to_vec();
    failures.sort_by(|a, b| a.file.cmp(&b.file));
    for f in failures {
        let (subject, index) = f.key.as_deref().and_then(|k| k.rsplit_once('/')).map_or((String::new(), String::new()), |(s, i)| (s.into(), i.into()));
        rows.push(vec![f.file, subject, index, String::new(), String::new(), "failed".into(), format!("{}: {}", f.stage, f.error)]);
    }
    csv_string(&header, rows)
}

pub const TEST_COLUMNS: [&str; 13] =
    ["analysis_id", "subgroup", "feature", "group_a", "group_b", "statistic_name", "statistic", "z", "p", "n", "method", "mean_a", "mean_b"];

pub fn tests_csv(rows: &[TestRow]) -> String {
    csv_string(
        &TEST_COLUMNS,
        rows.iter().map(|t| {
            vec![
                t.analysis_id.clone(),
                t.subgroup.clone(),
                t.feature.clone(),
                t.group_a.clone(),
                t.group_b.clone(),
                t.statistic_name.clone(),
                g6(t.statistic),
                cell(t.z),
                g6(t.p),
                t.n.to_string(),
                t.method.clone(),
                cell(t.mean_a),
                cell(t.mean_b),
            ]
        }),
    )
}

pub fn clusters_csv(c: &Clustering) -> String {
    let header = ["subject_id", "session_index", "x", "y", "cluster"];
    let rows = match &c.model {
        Ok(m) => c
            .keys
            .iter()
            .zip(&m.embedding)
            .zip(&m.labels)
            .map(|(((s, k), p), l)| vec![s.clone(), k.to_string(), g6(p[0]), g6(p[1]), l.to_string()])
            .collect(),
        Err(_) => Vec::new(),
    };
    csv_string(&header, rows)
}

pub fn scores_csv(c: &Clustering) -> String {
    let header = ["k", "silhouette", "davies_bouldin", "inertia", "selected"];
    let rows = match &c.model {
        Ok(m) => m
            .selection
            .table
            .iter()
            .map(|s| vec![s.k.to_string(), g6(s.silhouette), g6(s.davies_bouldin), g6(s.inertia), (s.k == m.k).to_string()])
            .collect(),
        Err(_) => Vec::new(),
    };
    csv_string(&header, rows)
}

/// Reads a CSV file into header-keyed records.
pub fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok(header.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}
