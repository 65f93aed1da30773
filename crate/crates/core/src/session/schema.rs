//! `biosession/1` JSON layout.
//!
//! ```json
//! {
//!   "schema": "biosession/1",
//!   "meta": {"subject_id": "S01", "age_months": 150, "sex": "F"},
//!   "session_index": 1,
//!   "duration_s": 600.0,
//!   "clinical": {"ados_comparison": 6, "ados_total": 12, "ados_sa": 9,
//!                "iq": 98, "vci": 95, "pri": 102, "wmi": 91, "psi": 88},
//!   "phases": [{"label": "Baseline", "start_s": 0, "end_s": 119}],
//!   "signals": [{"kind": "HR", "rate_hz": 1, "t0": 0,
//!                "samples": [72.0, 73.5, null], "valid": [true, true, false]}],
//!   "behavior": {"duration_min": 30,
//!                "counts": {"SO_Peers": {"Spontaneous": 12, "Suggested": 1, "Indicated": 2}},
//!                "likert": {"Involvement": 5}}
//! }
//! ```
//!
//! `clinical`, `phases`, `behavior`, `t0` and `valid` are optional. A `null`
//! sample is read as an invalid sample. Unknown keys are ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    BehavioralRecord, ClinicalProfile, Condition, LikertItem, ParticipantMeta, PhaseAnnotation, Session,
    SessionError, SignalKind, SignalTrace, SocialFeature,
};

pub const SCHEMA_TAG: &str = "biosession/1";

#[derive(Serialize, Deserialize)]
struct SessionDoc {
    schema: String,
    meta: ParticipantMeta,
    session_index: u8,
    duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clinical: Option<ClinicalProfile>,
    #[serde(default)]
    phases: Vec<PhaseAnnotation>,
    signals: Vec<SignalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    behavior: Option<BehaviorDoc>,
}

#[derive(Serialize, Deserialize)]
struct SignalDoc {
    kind: SignalKind,
    rate_hz: f64,
    #[serde(default)]
    t0: f64,
    samples: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
struct BehaviorDoc {
    duration_min: f64,
    #[serde(default)]
    counts: BTreeMap<SocialFeature, BTreeMap<Condition, u32>>,
    #[serde(default)]
    likert: BTreeMap<LikertItem, u8>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    likert_max: BTreeMap<LikertItem, u8>,
}

/// Parses and validates one session document.
pub fn parse_session(bytes: &[u8]) -> Result<Session, SessionError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let doc: SessionDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => SessionError::Schema { path, message: inner.to_string() },
            _ => SessionError::Json(inner.to_string()),
        }
    })?;
    de.end().map_err(|e| SessionError::Json(e.to_string()))?;

    if doc.schema != SCHEMA_TAG {
        return Err(SessionError::Schema {
            path: "schema".into(),
            message: format!("expected \"{SCHEMA_TAG}\", got \"{}\"", doc.schema),
        });
    }

    let mut traces = Vec::with_capacity(doc.signals.len());
    for (i, sig) in doc.signals.into_iter().enumerate() {
        let n = sig.samples.len();
        let valid_in = sig.valid.unwrap_or_else(|| vec![true; n]);
        let mut samples = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for (j, s) in sig.samples.into_iter().enumerate() {
            let ok = valid_in.get(j).copied().unwrap_or(true);
            samples.push(s.unwrap_or(0.0));
            valid.push(ok && s.is_some());
        }
        if valid_in.len() != n {
            valid = valid_in;
        }
        let trace = SignalTrace::new(sig.kind, sig.rate_hz, sig.t0, samples, valid).map_err(|e| match e {
            SessionError::Invariant { path, message } => {
                SessionError::Invariant { path: format!("signals[{i}].{path}"), message }
            }
            other => other,
        })?;
        traces.push(trace);
    }

    let behavior = doc
        .behavior
        .map(|b| {
            let counts = b
                .counts
                .into_iter()
                .flat_map(|(f, by_cond)| by_cond.into_iter().map(move |(c, n)| (f, c, n)));
            BehavioralRecord::new(b.duration_min, counts, b.likert, b.likert_max).map_err(|e| match e {
                SessionError::Invariant { path, message } => {
                    SessionError::Invariant { path: format!("behavior.{path}"), message }
                }
                other => other,
            })
        })
        .transpose()?;

    let session = Session {
        meta: doc.meta,
        clinical: doc.clinical,
        session_index: doc.session_index,
        duration_s: doc.duration_s,
        traces,
        phases: doc.phases,
        behavior,
    };
    if let Some((path, message)) = session.invariant_violations().into_iter().next() {
        return Err(SessionError::Invariant { path, message });
    }
    Ok(session)
}

/// Serializes a session to its `biosession/1` document (compact JSON).
pub fn to_json(s: &Session) -> String {
    let doc = SessionDoc {
        schema: SCHEMA_TAG.to_string(),
        meta: s.meta.clone(),
        session_index: s.session_index,
        duration_s: s.duration_s,
        clinical: s.clinical,
        phases: s.phases.clone(),
        signals: s
            .traces
            .iter()
            .map(|t| SignalDoc {
                kind: t.kind(),
                rate_hz: t.rate_hz(),
                t0: t.t0(),
                samples: t.samples().iter().map(|x| Some(*x)).collect(),
                valid: if t.is_fully_valid() { None } else { Some(t.valid().to_vec()) },
            })
            .collect(),
        behavior: s.behavior.as_ref().map(|b| {
            let mut counts: BTreeMap<SocialFeature, BTreeMap<Condition, u32>> = BTreeMap::new();
            for (k, n) in b.counts() {
                counts.entry(k.feature).or_default().insert(k.condition, n);
            }
            BehaviorDoc {
                duration_min: b.duration_min,
                counts,
                likert: b.likert.clone(),
                likert_max: b.likert_max.clone(),
            }
        }),
    };
    serde_json::to_string(&doc).expect("session documents always serialize")
}
