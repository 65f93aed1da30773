//! Signal preprocessing: low-pass filtering, resampling onto a 1 Hz grid,
//! missing-data exclusion, random-forest gap interpolation and winsorized
//! baseline z-normalization.
//!
//! [`run_preprocess`] applies the stages in that fixed order to every trace of
//! a session.

pub mod filter;
pub mod forest;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{fnv1a, mean, percentile_sorted, sample_sd};
use crate::session::{interval_indices, PhaseLabel, Session, SessionError, SignalKind, SignalTrace};
use forest::{ForestConfig, RandomForest};

/// Acquisition rate of the wearable band.
pub const DEVICE_RATE_HZ: f64 = 128.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("low-pass cutoff {cutoff_hz} Hz needs a sampling rate above {} Hz, trace is at {rate_hz} Hz", 2.0 * cutoff_hz)]
    CutoffTooHigh { cutoff_hz: f64, rate_hz: f64 },
    #[error("trace has no usable samples")]
    EmptyTrace,
    #[error("interpolation needs at least {needed} valid samples, found {valid}")]
    TooSparse { valid: usize, needed: usize },
    #[error("segment has {len} samples, at least {needed} required")]
    TooShort { len: usize, needed: usize },
    #[error("baseline segment contains invalid samples")]
    MaskedBaseline,
    #[error("baseline standard deviation is zero")]
    DegenerateBaseline,
    #[error("pipeline cannot run: {0}")]
    DegeneratePipeline(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,
    pub target_rate_hz: f64,
    pub missing_exclusion_ratio: f64,
    pub winsor_fraction: f64,
    pub rf_trees: usize,
    pub rf_max_depth: Option<usize>,
    pub rf_seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lp_cutoff_hz: 0.45,
            lp_order: 4,
            target_rate_hz: 1.0,
            missing_exclusion_ratio: 0.5,
            winsor_fraction: 0.05,
            rf_trees: 100,
            rf_max_depth: None,
            rf_seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn check(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::InvalidConfig(m.to_string()));
        if !(self.lp_cutoff_hz > 0.0) {
            return bad("lp_cutoff_hz must be positive");
        }
        if self.lp_order == 0 {
            return bad("lp_order must be at least 1");
        }
        if !(self.target_rate_hz > 0.0) {
            return bad("target_rate_hz must be positive");
        }
        if !(0.0..=1.0).contains(&self.missing_exclusion_ratio) {
            return bad("missing_exclusion_ratio must lie in [0, 1]");
        }
        if !(self.winsor_fraction > 0.0 && self.winsor_fraction < 0.5) {
            return bad("winsor_fraction must lie in (0, 0.5)");
        }
        if self.rf_trees == 0 {
            return bad("rf_trees must be at least 1");
        }
        Ok(())
    }
}

/// Zero-phase Butterworth low-pass. Invalid samples are bridged linearly for
/// the filter pass, then restored to their original values and stay masked.
pub fn lowpass(trace: &SignalTrace, cfg: &PreprocessConfig) -> Result<SignalTrace, PreprocessError> {
    let rate = trace.rate_hz();
    if !(rate > 2.0 * cfg.lp_cutoff_hz) {
        return Err(PreprocessError::CutoffTooHigh { cutoff_hz: cfg.lp_cutoff_hz, rate_hz: rate });
    }
    let Some(bridged) = filter::bridge_gaps(trace.samples(), trace.valid()) else {
        return Ok(trace.clone());
    };
    let sos = filter::butter_lowpass(cfg.lp_order, cfg.lp_cutoff_hz, rate);
    let mut out = filter::sosfiltfilt(&sos, &bridged);
    for ((y, x), v) in out.iter_mut().zip(trace.samples()).zip(trace.valid()) {
        if !v {
            *y = *x;
        }
    }
    Ok(trace.derive(rate, trace.t0(), out, trace.valid().to_vec()))
}

/// Linear-interpolation resampling onto the grid `k / target_rate_hz`.
///
/// An output sample is valid only if every input sample it is interpolated
/// from is valid.
pub fn resample(trace: &SignalTrace, target_rate_hz: f64) -> Result<SignalTrace, PreprocessError> {
    const EPS: f64 = 1e-9;
    if trace.is_empty() {
        return Err(PreprocessError::EmptyTrace);
    }
    let rate = trace.rate_hz();
    let n = trace.len();
    let t_last = trace.time_at(n - 1);
    let k0 = (trace.t0() * target_rate_hz - EPS).ceil() as i64;
    let k1 = (t_last * target_rate_hz + EPS).floor() as i64;
    if k1 < k0 {
        return Err(PreprocessError::EmptyTrace);
    }
    let (xs, vs) = (trace.samples(), trace.valid());
    let mut samples = Vec::with_capacity((k1 - k0 + 1) as usize);
    let mut valid = Vec::with_capacity(samples.capacity());
    for k in k0..=k1 {
        let t = k as f64 / target_rate_hz;
        let pos = ((t - trace.t0()) * rate).max(0.0);
        let i0 = ((pos + EPS).floor() as usize).min(n - 1);
        let frac = pos - i0 as f64;
        if frac <= EPS || i0 + 1 >= n {
            samples.push(xs[i0]);
            valid.push(vs[i0]);
        } else {
            samples.push(xs[i0] * (1.0 - frac) + xs[i0 + 1] * frac);
            valid.push(vs[i0] && vs[i0 + 1]);
        }
    }
    Ok(trace.derive(target_rate_hz, k0 as f64 / target_rate_hz, samples, valid))
}

/// [`resample`] onto integer seconds.
pub fn resample_to_1hz(trace: &SignalTrace) -> Result<SignalTrace, PreprocessError> {
    resample(trace, 1.0)
}

/// Fraction of invalid samples.
pub fn missing_ratio(trace: &SignalTrace) -> Result<f64, PreprocessError> {
    if trace.is_empty() {
        return Err(PreprocessError::EmptyTrace);
    }
    Ok(trace.invalid_count() as f64 / trace.len() as f64)
}

/// Minimum number of valid samples needed to train the gap model.
pub const MIN_VALID_FOR_INTERPOLATION: usize = 10;
const NEIGHBORS_PER_SIDE: usize = 5;

/// Regression features for sample `i`: normalized time, sine/cosine of time at
/// 60 s, 300 s and whole-trace periods, and mean/SD of the nearest valid
/// neighbors on each side (the sample itself excluded).
fn gap_features(trace: &SignalTrace, valid_idx: &[usize], i: usize) -> Vec<f64> {
    use std::f64::consts::TAU;
    let n = trace.len();
    let t = trace.time_at(i);
    let span = n as f64 / trace.rate_hz();
    let mut f = Vec::with_capacity(9);
    f.push(if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 });
    for period in [60.0, 300.0, span] {
        f.push((TAU * t / period).sin());
        f.push((TAU * t / period).cos());
    }
    let p = valid_idx.partition_point(|&j| j < i);
    let after = if valid_idx.get(p) == Some(&i) { p + 1 } else { p };
    let left = &valid_idx[p.saturating_sub(NEIGHBORS_PER_SIDE)..p];
    let right = &valid_idx[after..(after + NEIGHBORS_PER_SIDE).min(valid_idx.len())];
    let values: Vec<f64> = left.iter().chain(right).map(|j| trace.samples()[*j]).collect();
    match values.len() {
        0 => f.extend([0.0, 0.0]),
        1 => f.extend([values[0], 0.0]),
        _ => f.extend([mean(&values), sample_sd(&values)]),
    }
    f
}

/// Replaces every invalid sample by a random-forest prediction trained on the
/// valid samples of the same trace. Valid samples are untouched.
pub fn rf_interpolate(trace: &SignalTrace, cfg: &PreprocessConfig) -> Result<SignalTrace, PreprocessError> {
    if trace.is_fully_valid() {
        return Ok(trace.clone());
    }
    let valid_idx: Vec<usize> = (0..trace.len()).filter(|i| trace.valid()[*i]).collect();
    if valid_idx.len() < MIN_VALID_FOR_INTERPOLATION {
        return Err(PreprocessError::TooSparse { valid: valid_idx.len(), needed: MIN_VALID_FOR_INTERPOLATION });
    }
    let rows: Vec<Vec<f64>> = valid_idx.iter().map(|i| gap_features(trace, &valid_idx, *i)).collect();
    let targets: Vec<f64> = valid_idx.iter().map(|i| trace.samples()[*i]).collect();
    let forest = RandomForest::fit(
        &rows,
        &targets,
        &ForestConfig {
            n_trees: cfg.rf_trees,
            max_depth: cfg.rf_max_depth,
            seed: cfg.rf_seed,
            ..ForestConfig::default()
        },
    );
    let mut samples = trace.samples().to_vec();
    for (i, s) in samples.iter_mut().enumerate() {
        if !trace.valid()[i] {
            *s = forest.predict(&gap_features(trace, &valid_idx, i));
        }
    }
    Ok(trace.derive(trace.rate_hz(), trace.t0(), samples, vec![true; trace.len()]))
}

/// Mean and SD of a winsorized baseline segment, plus the clipping bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const MIN_BASELINE_SAMPLES: usize = 20;

/// Clips the segment to its `[f, 1−f]` percentile values and returns the mean
/// and sample SD of the clipped values.
pub fn baseline_stats(segment: &SignalTrace, winsor_fraction: f64) -> Result<BaselineStats, PreprocessError> {
    if !(winsor_fraction > 0.0 && winsor_fraction < 0.5) {
        return Err(PreprocessError::InvalidConfig("winsor_fraction must lie in (0, 0.5)".into()));
    }
    if segment.len() < MIN_BASELINE_SAMPLES {
        return Err(PreprocessError::TooShort { len: segment.len(), needed: MIN_BASELINE_SAMPLES });
    }
    if !segment.is_fully_valid() {
        return Err(PreprocessError::MaskedBaseline);
    }
    let clipped = winsorize(segment.samples(), winsor_fraction);
    let sd = sample_sd(&clipped.values);
    if !(sd > 0.0) {
        return Err(PreprocessError::DegenerateBaseline);
    }
    Ok(BaselineStats { mean: mean(&clipped.values), sd, lower: clipped.lower, upper: clipped.upper })
}

pub(crate) struct Winsorized {
    pub values: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

pub(crate) fn winsorize(xs: &[f64], fraction: f64) -> Winsorized {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lower = percentile_sorted(&sorted, 100.0 * fraction);
    let upper = percentile_sorted(&sorted, 100.0 * (1.0 - fraction));
    Winsorized { values: xs.iter().map(|x| x.clamp(lower, upper)).collect(), lower, upper }
}

/// `x ↦ (x − mean) / sd` on every sample.
pub fn normalize(trace: &SignalTrace, stats: &BaselineStats) -> Result<SignalTrace, PreprocessError> {
    if !(stats.sd > 0.0) {
        return Err(PreprocessError::DegenerateBaseline);
    }
    let samples = trace.samples().iter().map(|x| (x - stats.mean) / stats.sd).collect();
    Ok(trace.derive(trace.rate_hz(), trace.t0(), samples, trace.valid().to_vec()))
}

/// Inverse of [`normalize`].
pub fn denormalize(values: &[f64], stats: &BaselineStats) -> Vec<f64> {
    values.iter().map(|z| z * stats.sd + stats.mean).collect()
}

/// One line of the preprocessing log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLogRecord {
    pub subject_id: String,
    pub session_index: u8,
    pub kind: SignalKind,
    pub missing_ratio: f64,
    pub dropped: bool,
    pub baseline_mean: Option<f64>,
    pub baseline_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub records: Vec<TraceLogRecord>,
}

impl PreprocessLog {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("log records serialize") + "\n")
            .collect()
    }

    pub fn dropped(&self) -> impl Iterator<Item = &TraceLogRecord> {
        self.records.iter().filter(|r| r.dropped)
    }
}

/// A session after [`run_preprocess`]: traces at 1 Hz, gap-free and
/// z-normalized against the baseline, with the statistics used.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSession {
    pub session: Session,
    pub baselines: BTreeMap<SignalKind, BaselineStats>,
    pub log: PreprocessLog,
}

impl PreprocessedSession {
    /// Trace values back in physical units.
    pub fn physical_values(&self, kind: SignalKind) -> Option<Vec<f64>> {
        let trace = self.session.trace(kind)?;
        let stats = self.baselines.get(&kind)?;
        Some(denormalize(trace.samples(), stats))
    }
}

/// Seed for the gap model of one trace, independent of processing order.
fn trace_seed(base: u64, s: &Session, kind: SignalKind) -> u64 {
    let tag = format!("{}/{}/{}", s.meta.subject_id, s.session_index, kind.as_str());
    base ^ fnv1a(tag.as_bytes())
}

/// Full chain: lowpass → resample → missing check → interpolate → baseline
/// statistics → normalize. Traces over the missing threshold are dropped and
/// logged, not reported as errors.
pub fn run_preprocess(session: &Session, cfg: &PreprocessConfig) -> Result<PreprocessedSession, PreprocessError> {
    cfg.check()?;
    let baseline = session
        .phase(PhaseLabel::Baseline)
        .ok_or_else(|| PreprocessError::DegeneratePipeline("session has no Baseline phase".into()))?;

    let mut out = session.clone();
    out.traces.clear();
    let mut baselines = BTreeMap::new();
    let mut log = PreprocessLog::default();

    for trace in &session.traces {
        let filtered = lowpass(trace, cfg)?;
        let resampled = resample(&filtered, cfg.target_rate_hz)?;
        let ratio = missing_ratio(&resampled)?;
        let mut record = TraceLogRecord {
            subject_id: session.meta.subject_id.clone(),
            session_index: session.session_index,
            kind: trace.kind(),
            missing_ratio: ratio,
            dropped: false,
            baseline_mean: None,
            baseline_sd: None,
        };
        if ratio > cfg.missing_exclusion_ratio {
            record.dropped = true;
            log.records.push(record);
            continue;
        }
        let seeded = PreprocessConfig { rf_seed: trace_seed(cfg.rf_seed, session, trace.kind()), ..cfg.clone() };
        let filled = rf_interpolate(&resampled, &seeded)?;
        let (lo, hi) = interval_indices(&filled, baseline.start_s, baseline.end_s);
        if lo >= hi {
            return Err(PreprocessError::DegeneratePipeline(format!(
                "Baseline phase does not overlap the {} trace",
                trace.kind()
            )));
        }
        let segment = filled.derive(filled.rate_hz(), filled.time_at(lo), filled.samples()[lo..hi].to_vec(), vec![true; hi - lo]);
        let stats = baseline_stats(&segment, cfg.winsor_fraction)?;
        record.baseline_mean = Some(stats.mean);
        record.baseline_sd = Some(stats.sd);
        log.records.push(record);
        baselines.insert(trace.kind(), stats);
        out.traces.push(normalize(&filled, &stats)?);
    }
    Ok(PreprocessedSession { session: out, baselines, log })
}

#[cfg(test)]
mod tests;
