//! Physiological features: descriptive statistics, time-domain HRV, Welch
//! band powers for the RR tachogram and respiration peak features.

mod peaks;
mod spectral;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use peaks::{find_peaks, savgol, savgol_window_len, PeakParams, RespirationPeaks, MIN_PEAK_SAMPLES};
pub use spectral::{band_powers, welch_psd, SpectralPowers, Spectrum, HF_BAND, LF_BAND, MIN_WELCH_SAMPLES};

use crate::numeric::{mean, sample_sd};
use crate::preprocess::PreprocessedSession;
use crate::session::{interval_indices, PhaseLabel, SignalKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("smoothing window of {window} samples must exceed polynomial order {poly_order}")]
    WindowTooSmall { window: usize, poly_order: usize },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub sd: f64,
    /// `sd / mean`; `None` when the mean is numerically zero.
    pub cv: Option<f64>,
    /// Excess kurtosis (normal → 0); `None` for a constant series.
    pub kurtosis: Option<f64>,
}

pub fn descriptive(xs: &[f64]) -> Result<DescriptiveStats, FeatureError> {
    if xs.len() < 2 {
        return Err(FeatureError::TooShort { needed: 2, got: xs.len() });
    }
    let m = mean(xs);
    let sd = sample_sd(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    Ok(DescriptiveStats {
        mean: m,
        sd,
        cv: (m.abs() >= 1e-12).then(|| sd / m),
        kurtosis: (m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0),
    })
}

/// Time-domain heart-rate variability indices, all in ms except pNN50 (%).
/// SDNN is the sample SD of the intervals; SDSD is the population SD of the
/// successive differences, so that rmssd² = sdsd² + mean(d)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvTime {
    pub sdnn: f64,
    pub sdsd: f64,
    pub rmssd: f64,
    pub pnn50: f64,
}

pub fn hrv_time(rr_ms: &[f64]) -> Result<HrvTime, FeatureError> {
    if rr_ms.len() < 3 {
        return Err(FeatureError::TooShort { needed: 3, got: rr_ms.len() });
    }
    let diffs: Vec<f64> = rr_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let over = diffs.iter().filter(|d| d.abs() > 50.0).count();
    Ok(HrvTime {
        sdnn: sample_sd(rr_ms),
        sdsd: {
            let m = mean(&diffs);
            (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt()
        },
        rmssd: (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt(),
        pnn50: 100.0 * over as f64 / diffs.len() as f64,
    })
}

/// The closed set of feature names, in export order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    HrMean,
    HrSd,
    HrCv,
    HrKurtosis,
    RrMean,
    RrSd,
    RrCv,
    RrKurtosis,
    RrSdnn,
    RrSdsd,
    RrRmssd,
    RrPnn50,
    RrTp,
    RrLf,
    RrHf,
    RrLfHf,
    BfMean,
    BfSd,
    BfCv,
    BfKurtosis,
    BfPrate,
    BfMeanProminence,
    BfMeanWidth,
}

impl Feature {
    pub const ALL: [Feature; 23] = [
        Feature::HrMean,
        Feature::HrSd,
        Feature::HrCv,
        Feature::HrKurtosis,
        Feature::RrMean,
        Feature::RrSd,
        Feature::RrCv,
        Feature::RrKurtosis,
        Feature::RrSdnn,
        Feature::RrSdsd,
        Feature::RrRmssd,
        Feature::RrPnn50,
        Feature::RrTp,
        Feature::RrLf,
        Feature::RrHf,
        Feature::RrLfHf,
        Feature::BfMean,
        Feature::BfSd,
        Feature::BfCv,
        Feature::BfKurtosis,
        Feature::BfPrate,
        Feature::BfMeanProminence,
        Feature::BfMeanWidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::HrMean => "HR_mean",
            Feature::HrSd => "HR_sd",
            Feature::HrCv => "HR_cv",
            Feature::HrKurtosis => "HR_kurtosis",
            Feature::RrMean => "RR_mean",
            Feature::RrSd => "RR_sd",
            Feature::RrCv => "RR_cv",
            Feature::RrKurtosis => "RR_kurtosis",
            Feature::RrSdnn => "RR_sdnn",
            Feature::RrSdsd => "RR_sdsd",
            Feature::RrRmssd => "RR_rmssd",
            Feature::RrPnn50 => "RR_pnn50",
            Feature::RrTp => "RR_tp",
            Feature::RrLf => "RR_lf",
            Feature::RrHf => "RR_hf",
            Feature::RrLfHf => "RR_lf_hf",
            Feature::BfMean => "BF_mean",
            Feature::BfSd => "BF_sd",
            Feature::BfCv => "BF_cv",
            Feature::BfKurtosis => "BF_kurtosis",
            Feature::BfPrate => "BF_prate",
            Feature::BfMeanProminence => "BF_mean_prominence",
            Feature::BfMeanWidth => "BF_mean_width",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn signal(self) -> SignalKind {
        match self as usize {
            0..=3 => SignalKind::Hr,
            4..=15 => SignalKind::Rr,
            _ => SignalKind::Bf,
        }
    }

    /// Registry entries belonging to one signal.
    pub fn for_signal(kind: SignalKind) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |f| f.signal() == kind)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which stretch of a session a feature vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    /// Everything after the baseline.
    Session,
    Scenario(PhaseLabel),
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Session => "Session",
            Segment::Scenario(p) => p.as_str(),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Per {
    Session,
    Scenario,
}

/// Why a registry entry is missing from a vector whose signal is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureFlag {
    /// Spectrum estimated from one segment shorter than the Welch window.
    ShortSpectralSegment,
    /// Too few samples for this signal's computations.
    SegmentTooShort(SignalKind),
    /// The value is mathematically undefined here (zero mean, zero variance,
    /// no HF power, no peaks).
    Undefined(Feature),
}

impl fmt::Display for FeatureFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureFlag::ShortSpectralSegment => f.write_str("short_spectral_segment"),
            FeatureFlag::SegmentTooShort(k) => write!(f, "{k}_too_short"),
            FeatureFlag::Undefined(feat) => write!(f, "{feat}_undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub segment: Segment,
    pub duration_s: f64,
    pub values: BTreeMap<Feature, f64>,
    pub flags: Vec<FeatureFlag>,
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.values.get(&f).copied()
    }

    fn put(&mut self, f: Feature, v: Option<f64>) {
        match v {
            Some(v) if v.is_finite() => {
                self.values.insert(f, v);
            }
            _ => self.flags.push(FeatureFlag::Undefined(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub savgol_window_s: f64,
    pub savgol_order: usize,
    pub welch_segment_s: f64,
    pub welch_overlap: f64,
    pub peaks: PeakParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            savgol_window_s: 30.0,
            savgol_order: 5,
            welch_segment_s: 256.0,
            welch_overlap: 0.5,
            peaks: PeakParams::default(),
        }
    }
}

impl FeatureConfig {
    pub fn check(&self, rate_hz: f64) -> Result<(), FeatureError> {
        let window = savgol_window_len(self.savgol_window_s, rate_hz);
        if window <= self.savgol_order {
            return Err(FeatureError::WindowTooSmall { window, poly_order: self.savgol_order });
        }
        if !(0.0..1.0).contains(&self.welch_overlap) {
            return Err(FeatureError::InvalidConfig(format!("welch_overlap {} outside [0, 1)", self.welch_overlap)));
        }
        if !(self.welch_segment_s > 0.0) {
            return Err(FeatureError::InvalidConfig("welch_segment_s must be positive".into()));
        }
        Ok(())
    }
}

fn put_descriptive(v: &mut FeatureVector, xs: &[f64], keys: [Feature; 4]) {
    match descriptive(xs) {
        Ok(d) => {
            v.put(keys[0], Some(d.mean));
            v.put(keys[1], Some(d.sd));
            v.put(keys[2], d.cv);
            v.put(keys[3], d.kurtosis);
        }
        Err(_) => v.flags.push(FeatureFlag::SegmentTooShort(keys[0].signal())),
    }
}

/// Adds the features of one signal, computed on physical-unit samples.
pub fn signal_features(v: &mut FeatureVector, kind: SignalKind, xs: &[f64], rate_hz: f64, cfg: &FeatureConfig) {
    match kind {
        SignalKind::Hr => put_descriptive(v, xs, [Feature::HrMean, Feature::HrSd, Feature::HrCv, Feature::HrKurtosis]),
        SignalKind::Rr => {
            put_descriptive(v, xs, [Feature::RrMean, Feature::RrSd, Feature::RrCv, Feature::RrKurtosis]);
            if let Ok(h) = hrv_time(xs) {
                v.put(Feature::RrSdnn, Some(h.sdnn));
                v.put(Feature::RrSdsd, Some(h.sdsd));
                v.put(Feature::RrRmssd, Some(h.rmssd));
                v.put(Feature::RrPnn50, Some(h.pnn50));
            }
            match welch_psd(xs, rate_hz, cfg.welch_segment_s, cfg.welch_overlap) {
                Ok(spec) => {
                    if spec.short_segment {
                        v.flags.push(FeatureFlag::ShortSpectralSegment);
                    }
                    let p = band_powers(&spec);
                    v.put(Feature::RrTp, Some(p.tp));
                    v.put(Feature::RrLf, Some(p.lf));
                    v.put(Feature::RrHf, Some(p.hf));
                    v.put(Feature::RrLfHf, p.lf_hf_ratio);
                }
                Err(_) => v.flags.push(FeatureFlag::SegmentTooShort(SignalKind::Rr)),
            }
        }
        SignalKind::Bf => {
            put_descriptive(v, xs, [Feature::BfMean, Feature::BfSd, Feature::BfCv, Feature::BfKurtosis]);
            let peaks = savgol(xs, rate_hz, cfg.savgol_window_s, cfg.savgol_order)
                .and_then(|smooth| find_peaks(&smooth, rate_hz, cfg.peaks));
            match peaks {
                Ok(p) => {
                    v.put(Feature::BfPrate, Some(p.prate()));
                    v.put(Feature::BfMeanProminence, p.mean_prominence());
                    v.put(Feature::BfMeanWidth, p.mean_width());
                }
                Err(_) => v.flags.push(FeatureFlag::SegmentTooShort(SignalKind::Bf)),
            }
        }
    }
    v.flags.sort();
    v.flags.dedup();
}

/// Feature vectors for a preprocessed session: one for the whole
/// post-baseline stretch, or one per scenario phase present, in game order.
pub fn session_features(pre: &PreprocessedSession, per: Per, cfg: &FeatureConfig) -> Result<Vec<FeatureVector>, FeatureError> {
    let s = &pre.session;
    let rate = s.traces.first().map_or(1.0, |t| t.rate_hz());
    cfg.check(rate)?;
    let spans: Vec<(Segment, f64, f64)> = match per {
        Per::Session => {
            let start = s.phase(PhaseLabel::Baseline).map_or(0.0, |b| b.end_s);
            vec![(Segment::Session, start, s.duration_s)]
        }
        Per::Scenario => PhaseLabel::SCENARIOS
            .iter()
            .filter_map(|l| s.phase(*l).map(|p| (Segment::Scenario(*l), p.start_s, p.end_s)))
            .collect(),
    };

    let mut out = Vec::with_capacity(spans.len());
    for (segment, start, end) in spans {
        let mut v = FeatureVector { segment, duration_s: end - start, values: BTreeMap::new(), flags: Vec::new() };
        for trace in &s.traces {
            let Some(values) = pre.physical_values(trace.kind()) else { continue };
            let (lo, hi) = interval_indices(trace, start, end);
            signal_features(&mut v, trace.kind(), &values[lo..hi.max(lo)], trace.rate_hz(), cfg);
        }
        out.push(v);
    }
    Ok(out)
}
