//! Loading session files and running the per-session stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use biosession::features::{session_features, FeatureVector, Per};
use biosession::preprocess::{run_preprocess, PreprocessLog, PreprocessedSession};
use biosession::session::{parse_session, validate_session, Finding, Session};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct LoadedSession {
    /// File name relative to the input directory.
    pub file: String,
    pub session: Session,
    pub warnings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub file: String,
    /// `subject/index` when the file got far enough to tell.
    pub key: Option<String>,
    pub stage: &'static str,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct Ingested {
    /// Sorted by subject id, then session index.
    pub sessions: Vec<LoadedSession>,
    pub failures: Vec<Failure>,
    /// (file, sha256) of every input, in file-name order.
    pub inputs: Vec<(String, String)>,
}

impl Ingested {
    pub fn total(&self) -> usize {
        self.inputs.len()
    }
}

/// Session files named by `paths`: directories contribute their `*.json`
/// entries (not recursively), in name order.
pub fn session_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(CliError::io(format!("cannot list {}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Usage(format!("no such file or directory: {}", p.display())));
        }
    }
    Ok(files)
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Reads, parses and validates every file. Files that fail either step, and
/// later duplicates of a session key, are reported as failures.
pub fn ingest(paths: &[PathBuf]) -> Result<Ingested, CliError> {
    let files = session_files(paths)?;
    let parsed: Vec<(String, String, Result<LoadedSession, Failure>)> = files
        .par_iter()
        .map(|path| {
            let file = display_name(path);
            let bytes = match std::fs::read(path) {
                Ok(b) => b,
                Err(e) => return (file.clone(), String::new(), Err(Failure { file, key: None, stage: "read", error: e.to_string() })),
            };
            let digest = format!("{:x}", Sha256::digest(&bytes));
            let loaded = match parse_session(&bytes) {
                Err(e) => Err(Failure { file: file.clone(), key: None, stage: "parse", error: e.to_string() }),
                Ok(session) => {
                    let report = validate_session(&session);
                    let first_error = report.errors().next().map(|e| format!("{}: {}", e.path, e.message));
                    if let Some(error) = first_error {
                        Err(Failure { file: file.clone(), key: Some(session.key()), stage: "validate", error })
                    } else {
                        Ok(LoadedSession { file: file.clone(), warnings: report.warnings().cloned().collect(), session })
                    }
                }
            };
            (file, digest, loaded)
        })
        .collect();

    let mut out = Ingested::default();
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (file, digest, loaded) in parsed {
        out.inputs.push((file.clone(), digest));
        match loaded {
            Ok(s) => {
                let key = s.session.key();
                if let Some(first) = seen.get(&key) {
                    out.failures.push(Failure { file, key: Some(key.clone()), stage: "ingest", error: format!("duplicate session {key}, first seen in {first}") });
                } else {
                    seen.insert(key, file);
                    out.sessions.push(s);
                }
            }
            Err(f) => out.failures.push(f),
        }
    }
    out.sessions.sort_by(|a, b| {
        (&a.session.meta.subject_id, a.session.session_index).cmp(&(&b.session.meta.subject_id, b.session.session_index))
    });
    Ok(out)
}

/// One session after preprocessing and feature extraction.
#[derive(Debug, Clone)]
pub struct Processed {
    pub file: String,
    pub session: Session,
    pub preprocessed: PreprocessedSession,
    /// Whole post-baseline vector first (when requested), then scenarios.
    pub features: Vec<FeatureVector>,
}

impl Processed {
    pub fn log(&self) -> &PreprocessLog {
        &self.preprocessed.log
    }
}

/// Preprocesses every session (and extracts features when `features` is
/// set) in parallel. Output order follows the input order.
pub fn process(sessions: &[LoadedSession], cfg: &PipelineConfig, features: bool) -> Vec<Result<Processed, Failure>> {
    sessions
        .par_iter()
        .map(|s| {
            let fail = |stage, error: String| Failure { file: s.file.clone(), key: Some(s.session.key()), stage, error };
            let pre = run_preprocess(&s.session, &cfg.preprocess).map_err(|e| fail("preprocess", e.to_string()))?;
            let mut vectors = Vec::new();
            if features {
                if cfg.segments.session() {
                    vectors.extend(session_features(&pre, Per::Session, &cfg.features).map_err(|e| fail("features", e.to_string()))?);
                }
                if cfg.segments.scenario() {
                    vectors.extend(session_features(&pre, Per::Scenario, &cfg.features).map_err(|e| fail("features", e.to_string()))?);
                }
            }
            Ok(Processed { file: s.file.clone(), session: s.session.clone(), preprocessed: pre, features: vectors })
        })
        .collect()
}
