//! Session data model: signal traces, phase annotations, participant data and
//! behavioral observations, plus the on-disk JSON schema.
//!
//! A session file is a single JSON document tagged `"schema": "biosession/1"`.
//! See [`parse_session`] and [`to_json`] for the exact layout.

mod behavior;
mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use behavior::{behavior_rates, BehavioralRecord, Condition, LikertItem, RateKey, SocialFeature};
pub use schema::{parse_session, to_json, SCHEMA_TAG};

/// Exclusion threshold on the fraction of invalid samples in a trace.
pub const MISSING_EXCLUSION_RATIO: f64 = 0.5;

/// Age (months) from which a participant counts as adolescent.
pub const ADOLESCENT_FROM_MONTHS: u32 = 156;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at `{path}`: {message}")]
    Invariant { path: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("activity duration must be positive to compute rates")]
    ZeroDuration,
}

impl SessionError {
    pub(crate) fn invariant(path: impl Into<String>, message: impl Into<String>) -> Self {
        SessionError::Invariant {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    /// Heart rate, beats/min.
    #[serde(rename = "HR")]
    Hr,
    /// Inter-beat (RR) interval, ms.
    #[serde(rename = "RR")]
    Rr,
    /// Breathing frequency, breaths/min.
    #[serde(rename = "BF")]
    Bf,
}

impl SignalKind {
    pub const ALL: [SignalKind; 3] = [SignalKind::Hr, SignalKind::Rr, SignalKind::Bf];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Hr => "HR",
            SignalKind::Rr => "RR",
            SignalKind::Bf => "BF",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SignalKind::Hr => "beats/min",
            SignalKind::Rr => "ms",
            SignalKind::Bf => "breaths/min",
        }
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A uniformly sampled signal with a per-sample validity mask.
///
/// Sample `i` sits at time `t0 + i / rate_hz` seconds from session start.
/// Invalid samples keep a finite placeholder value but must never enter a
/// statistic; the mask is the only source of truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    kind: SignalKind,
    rate_hz: f64,
    t0: f64,
    samples: Vec<f64>,
    valid: Vec<bool>,
}

impl SignalTrace {
    /// Builds a trace, checking the length and rate invariants. Non-finite
    /// samples are replaced by `0.0` and marked invalid.
    pub fn new(
        kind: SignalKind,
        rate_hz: f64,
        t0: f64,
        mut samples: Vec<f64>,
        mut valid: Vec<bool>,
    ) -> Result<Self, SessionError> {
        if samples.is_empty() {
            return Err(SessionError::invariant("samples", "trace must hold at least one sample"));
        }
        if samples.len() != valid.len() {
            return Err(SessionError::invariant(
                "valid",
                format!("mask length {} differs from sample count {}", valid.len(), samples.len()),
            ));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(SessionError::invariant("rate_hz", format!("rate must be positive, got {rate_hz}")));
        }
        if !t0.is_finite() {
            return Err(SessionError::invariant("t0", "offset must be finite"));
        }
        for (x, v) in samples.iter_mut().zip(valid.iter_mut()) {
            if !x.is_finite() {
                *x = 0.0;
                *v = false;
            }
        }
        Ok(SignalTrace { kind, rate_hz, t0, samples, valid })
    }

    /// All-valid trace.
    pub fn from_samples(kind: SignalKind, rate_hz: f64, t0: f64, samples: Vec<f64>) -> Result<Self, SessionError> {
        let valid = vec![true; samples.len()];
        Self::new(kind, rate_hz, t0, samples, valid)
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.rate_hz
    }

    /// End of the covered interval, `t0 + len / rate`.
    pub fn end_s(&self) -> f64 {
        self.t0 + self.len() as f64 / self.rate_hz
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Values of the valid samples only.
    pub fn valid_values(&self) -> Vec<f64> {
        self.samples
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(x, _)| *x)
            .collect()
    }

    /// Same kind, new contents.
    pub(crate) fn derive(&self, rate_hz: f64, t0: f64, samples: Vec<f64>, valid: Vec<bool>) -> Self {
        debug_assert_eq!(samples.len(), valid.len());
        SignalTrace { kind: self.kind, rate_hz, t0, samples, valid }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    Baseline,
    Coin,
    Station,
    Battle,
}

impl PhaseLabel {
    pub const SCENARIOS: [PhaseLabel; 3] = [PhaseLabel::Coin, PhaseLabel::Station, PhaseLabel::Battle];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Baseline => "Baseline",
            PhaseLabel::Coin => "Coin",
            PhaseLabel::Station => "Station",
            PhaseLabel::Battle => "Battle",
        }
    }
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAnnotation {
    pub label: PhaseLabel,
    pub start_s: f64,
    pub end_s: f64,
}

impl PhaseAnnotation {
    pub fn new(label: PhaseLabel, start_s: f64, end_s: f64) -> Self {
        PhaseAnnotation { label, start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    PreAdolescent,
    Adolescent,
}

impl AgeGroup {
    pub fn from_months(age_months: u32) -> Self {
        if age_months >= ADOLESCENT_FROM_MONTHS {
            AgeGroup::Adolescent
        } else {
            AgeGroup::PreAdolescent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantMeta {
    pub subject_id: String,
    pub age_months: u32,
    pub sex: Sex,
}

impl ParticipantMeta {
    pub fn age_group(&self) -> AgeGroup {
        AgeGroup::from_months(self.age_months)
    }
}

/// Clinical scores: raw ADOS scores and standardized WISC-IV indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalProfile {
    pub ados_comparison: f64,
    pub ados_total: f64,
    pub ados_sa: f64,
    pub iq: f64,
    pub vci: f64,
    pub pri: f64,
    pub wmi: f64,
    pub psi: f64,
}

impl ClinicalProfile {
    pub const FIELDS: [&'static str; 8] =
        ["ados_comparison", "ados_total", "ados_sa", "iq", "vci", "pri", "wmi", "psi"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.ados_comparison,
            self.ados_total,
            self.ados_sa,
            self.iq,
            self.vci,
            self.pri,
            self.wmi,
            self.psi,
        ]
    }
}

/// One VR sitting of one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub meta: ParticipantMeta,
    pub clinical: Option<ClinicalProfile>,
    pub session_index: u8,
    pub duration_s: f64,
    pub traces: Vec<SignalTrace>,
    pub phases: Vec<PhaseAnnotation>,
    pub behavior: Option<BehavioralRecord>,
}

impl Session {
    pub fn trace(&self, kind: SignalKind) -> Option<&SignalTrace> {
        self.traces.iter().find(|t| t.kind == kind)
    }

    pub fn phase(&self, label: PhaseLabel) -> Option<&PhaseAnnotation> {
        self.phases.iter().find(|p| p.label == label)
    }

    /// Stable identifier `subject/session_index`.
    pub fn key(&self) -> String {
        format!("{}/{}", self.meta.subject_id, self.session_index)
    }

    /// Hard invariant violations as `(path, message)` pairs; empty when valid.
    pub fn invariant_violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(1..=3).contains(&self.session_index) {
            out.push(("session_index".into(), format!("must be 1, 2 or 3, got {}", self.session_index)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            out.push(("duration_s".into(), format!("must be positive, got {}", self.duration_s)));
        }
        if let Some(c) = &self.clinical {
            for (name, v) in ClinicalProfile::FIELDS.iter().zip(c.values()) {
                if !v.is_finite() {
                    out.push((format!("clinical.{name}"), "must be finite".into()));
                }
            }
            if c.iq < 0.0 {
                out.push(("clinical.iq".into(), "must be non-negative".into()));
            }
        }
        for (i, t) in self.traces.iter().enumerate() {
            if self.traces[..i].iter().any(|o| o.kind == t.kind) {
                out.push((format!("signals[{i}].kind"), format!("duplicate {} trace", t.kind)));
            }
        }
        let mut baselines = 0;
        for (i, p) in self.phases.iter().enumerate() {
            let path = format!("phases[{i}]");
            if !(p.start_s.is_finite() && p.end_s.is_finite()) {
                out.push((path, "bounds must be finite".into()));
                continue;
            }
            if p.start_s < 0.0 || p.start_s >= p.end_s || p.end_s > self.duration_s {
                out.push((
                    path.clone(),
                    format!(
                        "bounds [{}, {}] must satisfy 0 <= start < end <= duration ({})",
                        p.start_s, p.end_s, self.duration_s
                    ),
                ));
            }
            if p.label == PhaseLabel::Baseline {
                baselines += 1;
            }
            for (j, q) in self.phases[..i].iter().enumerate() {
                if p.start_s < q.end_s && q.start_s < p.end_s {
                    out.push((path.clone(), format!("overlaps phases[{j}] ({})", q.label)));
                }
            }
        }
        if baselines > 1 {
            out.push(("phases".into(), "at most one Baseline phase allowed".into()));
        }
        if let Some(b) = &self.behavior {
            out.extend(b.invariant_violations().into_iter().map(|(p, m)| (format!("behavior.{p}"), m)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.iter().all(|f| f.severity != Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }
}

/// Checks a session and reports hard failures and soft warnings.
///
/// Warnings are raised for a missing Baseline phase (baseline normalization
/// becomes impossible) and for traces whose invalid fraction exceeds the
/// exclusion ratio.
pub fn validate_session(s: &Session) -> ValidationReport {
    let mut findings: Vec<Finding> = s
        .invariant_violations()
        .into_iter()
        .map(|(path, message)| Finding { severity: Severity::Error, path, message })
        .collect();
    if s.phase(PhaseLabel::Baseline).is_none() {
        findings.push(Finding {
            severity: Severity::Warning,
            path: "phases".into(),
            message: "no baseline: normalization will be impossible".into(),
        });
    }
    for (i, t) in s.traces.iter().enumerate() {
        let ratio = t.invalid_count() as f64 / t.len() as f64;
        if ratio > MISSING_EXCLUSION_RATIO {
            findings.push(Finding {
                severity: Severity::Warning,
                path: format!("signals[{i}]"),
                message: format!(
                    "{} trace missing ratio {:.2} exceeds {}; trace will be excluded",
                    t.kind, ratio, MISSING_EXCLUSION_RATIO
                ),
            });
        }
    }
    ValidationReport { findings }
}

/// Cuts the samples of `kind` falling in the half-open interval `[start_s, end_s)`
/// of the phase labelled `label`.
///
/// The returned trace starts at the time of its first sample, which equals the
/// phase start whenever the phase boundary lies on the sampling grid.
pub fn slice_phase(s: &Session, kind: SignalKind, label: PhaseLabel) -> Result<SignalTrace, SessionError> {
    let trace = s
        .trace(kind)
        .ok_or_else(|| SessionError::NotFound(format!("no {kind} trace")))?;
    let phase = s
        .phase(label)
        .ok_or_else(|| SessionError::NotFound(format!("no {label} phase")))?;
    slice_interval(trace, phase.start_s, phase.end_s)
        .ok_or_else(|| SessionError::NotFound(format!("{label} phase does not intersect the {kind} trace")))
}

/// Samples of `trace` with time in `[start_s, end_s)`, or `None` when empty.
pub fn slice_interval(trace: &SignalTrace, start_s: f64, end_s: f64) -> Option<SignalTrace> {
    let (lo, hi) = interval_indices(trace, start_s, end_s);
    if lo >= hi {
        return None;
    }
    Some(trace.derive(
        trace.rate_hz,
        trace.time_at(lo),
        trace.samples[lo..hi].to_vec(),
        trace.valid[lo..hi].to_vec(),
    ))
}

/// Index range `[lo, hi)` of samples whose time lies in `[start_s, end_s)`.
pub(crate) fn interval_indices(trace: &SignalTrace, start_s: f64, end_s: f64) -> (usize, usize) {
    // Boundaries that sit on the grid up to rounding noise count as on-grid.
    const EPS: f64 = 1e-9;
    let to_index = |t: f64| {
        let pos = (t - trace.t0) * trace.rate_hz;
        let idx = (pos - EPS).ceil();
        idx.clamp(0.0, trace.len() as f64) as usize
    };
    (to_index(start_s), to_index(end_s))
}
