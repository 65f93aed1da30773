//! Synthetic sessions and datasets with known ground truth.
//!
//! Signals are generated as 1 Hz knot series and spline-interpolated to the
//! device rate, so what the preprocessing chain recovers at 1 Hz is close
//! to the planted series. RR intervals are an AR(1) process plus an LF and an
//! HF tone; the AR coefficient and scale are calibrated so that the SDNN and
//! RMSSD of the analysed segment (after the baseline) hit their targets.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{fnv1a, mean, sample_sd};
use crate::preprocess::DEVICE_RATE_HZ;
use crate::session::{
    BehavioralRecord, ClinicalProfile, Condition, LikertItem, ParticipantMeta, PhaseAnnotation, PhaseLabel, Session, Sex,
    SignalKind, SignalTrace, SocialFeature,
};
use crate::stats::Family;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error("targets cannot be met: {0}")]
    Infeasible(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrProfile {
    pub mean_bpm: f64,
    pub sd_bpm: f64,
}

impl Default for HrProfile {
    fn default() -> Self {
        HrProfile { mean_bpm: 90.0, sd_bpm: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrProfile {
    pub mean_ms: f64,
    pub sdnn_ms: f64,
    pub rmssd_ms: f64,
    pub lf_hz: f64,
    pub lf_amp_ms: f64,
    pub hf_hz: f64,
    pub hf_amp_ms: f64,
}

impl Default for RrProfile {
    fn default() -> Self {
        RrProfile { mean_ms: 667.0, sdnn_ms: 50.0, rmssd_ms: 40.0, lf_hz: 0.1, lf_amp_ms: 20.0, hf_hz: 0.25, hf_amp_ms: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfProfile {
    /// Breathing rate, breaths/min; also the oscillation frequency of the
    /// BF trace (rate/60 Hz).
    pub rate_bpm: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
}

impl Default for BfProfile {
    fn default() -> Self {
        BfProfile { rate_bpm: 15.0, amplitude: 2.0, noise_sd: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSpec {
    pub count: usize,
    pub mean_len_s: f64,
}

impl Default for GapSpec {
    fn default() -> Self {
        GapSpec { count: 3, mean_len_s: 8.0 }
    }
}

/// One contiguous outage covering `fraction` of a trace, placed after the
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub kind: SignalKind,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub subject_id: String,
    pub session_index: u8,
    pub age_months: u32,
    pub sex: Sex,
    pub duration_s: f64,
    pub baseline_s: f64,
    pub rate_hz: f64,
    pub hr: HrProfile,
    pub rr: RrProfile,
    pub bf: BfProfile,
    pub gaps: GapSpec,
    pub dropouts: Vec<Dropout>,
    /// Scenario phases; by default session 1 plays Coin, session 2 Coin and
    /// Station, session 3 all three, splitting the time after the baseline
    /// evenly.
    pub scenarios: Option<Vec<PhaseAnnotation>>,
    pub behavior: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            subject_id: "SYN01".into(),
            session_index: 3,
            age_months: 140,
            sex: Sex::M,
            duration_s: 1740.0,
            baseline_s: 119.0,
            rate_hz: DEVICE_RATE_HZ,
            hr: HrProfile::default(),
            rr: RrProfile::default(),
            bf: BfProfile::default(),
            gaps: GapSpec::default(),
            dropouts: Vec::new(),
            scenarios: None,
            behavior: true,
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<(), SpecError> {
        if !(self.baseline_s > 0.0 && self.duration_s > self.baseline_s + 10.0) {
            return invalid("duration_s must exceed baseline_s by at least 10 s");
        }
        if !(1..=3).contains(&self.session_index) {
            return invalid("session_index must be 1, 2 or 3");
        }
        let rates = [self.rate_hz, self.hr.mean_bpm, self.rr.mean_ms, self.bf.rate_bpm, self.rr.sdnn_ms, self.rr.rmssd_ms];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return invalid("rates, means and variability targets must be positive");
        }
        if self.rate_hz < 2.0 {
            return invalid("rate_hz must be at least 2 Hz");
        }
        if self.hr.sd_bpm < 0.0 || self.bf.amplitude < 0.0 || self.bf.noise_sd < 0.0 || self.gaps.mean_len_s < 0.0 {
            return invalid("spreads and gap lengths must be non-negative");
        }
        for d in &self.dropouts {
            let room = (self.duration_s - self.baseline_s) / self.duration_s;
            if !(d.fraction > 0.0 && d.fraction <= room) {
                return invalid(format!("dropout fraction for {} must lie in (0, {room:.3}]", d.kind));
            }
        }
        Ok(())
    }

    fn phases(&self) -> Vec<PhaseAnnotation> {
        let mut out = vec![PhaseAnnotation::new(PhaseLabel::Baseline, 0.0, self.baseline_s)];
        match &self.scenarios {
            Some(s) => out.extend(s.iter().copied()),
            None => {
                let k = usize::from(self.session_index);
                let step = (self.duration_s - self.baseline_s) / k as f64;
                let edge = |i: usize| if i == k { self.duration_s } else { self.baseline_s + step * i as f64 };
                for (i, label) in PhaseLabel::SCENARIOS[..k].iter().enumerate() {
                    out.push(PhaseAnnotation::new(*label, edge(i), edge(i + 1)));
                }
            }
        }
        out
    }
}

/// Planted values of one synthetic session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subject_id: String,
    pub session_index: u8,
    pub seed: u64,
    /// Sample SD and RMSSD of the 1 Hz RR series over the analysed segment.
    pub sdnn_ms: f64,
    pub rmssd_ms: f64,
    pub ar_coefficient: f64,
    pub hr_mean_bpm: f64,
    pub hr_sd_bpm: f64,
    pub breathing_rate_bpm: f64,
    pub lf_hz: f64,
    pub hf_hz: f64,
    /// Fraction of planted invalid samples per trace at the device rate.
    pub missing_ratio: BTreeMap<SignalKind, f64>,
}

fn ar1(innov: &[f64], phi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(innov.len());
    let mut prev = innov[0] / (1.0 - phi * phi).sqrt();
    out.push(prev);
    for e in &innov[1..] {
        prev = phi * prev + e;
        out.push(prev);
    }
    out
}

fn rmssd(xs: &[f64]) -> f64 {
    let d: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect();
    mean(&d).sqrt()
}

/// Scale `c` so that tones + c·ar has the target sample SD over the window.
fn scale_for_sd(tones: &[f64], ar: &[f64], target_sd: f64) -> Option<f64> {
    let (mt, ma) = (mean(tones), mean(ar));
    let n1 = (tones.len() - 1) as f64;
    let vt = tones.iter().map(|t| (t - mt).powi(2)).sum::<f64>() / n1;
    let va = ar.iter().map(|a| (a - ma).powi(2)).sum::<f64>() / n1;
    let cov = tones.iter().zip(ar).map(|(t, a)| (t - mt) * (a - ma)).sum::<f64>() / n1;
    let disc = cov * cov - va * (vt - target_sd * target_sd);
    if va <= 0.0 || disc < 0.0 {
        return None;
    }
    let c = (-cov + disc.sqrt()) / va;
    (c > 0.0).then_some(c)
}

/// RR knots at 1 Hz calibrated on `window`; returns (series, φ).
fn rr_knots(p: &RrProfile, innov: &[f64], phases: (f64, f64), window: std::ops::Range<usize>) -> Result<(Vec<f64>, f64), SpecError> {
    use std::f64::consts::TAU;
    let tones: Vec<f64> = (0..innov.len())
        .map(|t| {
            let t = t as f64;
            p.lf_amp_ms * (TAU * p.lf_hz * t + phases.0).sin() + p.hf_amp_ms * (TAU * p.hf_hz * t + phases.1).sin()
        })
        .collect();
    let build = |phi: f64| -> Option<Vec<f64>> {
        let ar = ar1(innov, phi);
        let c = scale_for_sd(&tones[window.clone()], &ar[window.clone()], p.sdnn_ms)?;
        Some(tones.iter().zip(&ar).map(|(t, a)| p.mean_ms + t + c * a).collect())
    };
    let at = |phi: f64| build(phi).map(|s| rmssd(&s[window.clone()]));
    // RMSSD falls as φ rises; bisect on φ.
    let (mut lo, mut hi) = (-0.9, 0.995);
    let (r_lo, r_hi) = match (at(lo), at(hi)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SpecError::Infeasible(format!("tones alone exceed SDNN {} ms", p.sdnn_ms))),
    };
    if !(r_hi <= p.rmssd_ms && p.rmssd_ms <= r_lo) {
        return Err(SpecError::Infeasible(format!(
            "RMSSD {} ms is outside the reachable range [{r_hi:.1}, {r_lo:.1}] for SDNN {} ms",
            p.rmssd_ms, p.sdnn_ms
        )));
    }
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        match at(mid) {
            Some(r) if r > p.rmssd_ms => lo = mid,
            Some(_) => hi = mid,
            None => return Err(SpecError::Infeasible("calibration left the feasible region".into())),
        }
    }
    let phi = (lo + hi) / 2.0;
    Ok((build(phi).expect("checked during bisection"), phi))
}

/// Natural cubic spline through 1 Hz knots, evaluated on `n` samples at
/// `rate` Hz. Much flatter in-band than linear interpolation, so the variance
/// of the knot series survives the low-pass at the other end.
fn upsample(knots: &[f64], rate: f64, n: usize) -> Vec<f64> {
    let m = knots.len();
    // Second derivatives from the tridiagonal system (Thomas algorithm).
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 1..m - 1 {
        let rhs = 6.0 * (knots[i + 1] - 2.0 * knots[i] + knots[i - 1]);
        let denom = 4.0 - c[i - 1];
        c[i] = 1.0 / denom;
        d[i] = (rhs - d[i - 1]) / denom;
    }
    let mut m2 = vec![0.0; m];
    for i in (1..m - 1).rev() {
        m2[i] = d[i] - c[i] * m2[i + 1];
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let k = (t.floor() as usize).min(m - 2);
            let (b, a) = (t - k as f64, 1.0 - (t - k as f64));
            a * knots[k] + b * knots[k + 1] + ((a * a * a - a) * m2[k] + (b * b * b - b) * m2[k + 1]) / 6.0
        })
        .collect()
}

fn quantize(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn mark_gaps(valid: &mut [bool], spec: &SynthSpec, kind: SignalKind, rng: &mut ChaCha8Rng) {
    let rate = spec.rate_hz;
    let n = valid.len();
    let start_min = (spec.baseline_s * rate).ceil() as usize;
    if spec.gaps.count > 0 && spec.gaps.mean_len_s > 0.0 {
        let exp = Exp::new(1.0 / spec.gaps.mean_len_s).expect("positive mean");
        for _ in 0..spec.gaps.count {
            let len_s: f64 = exp.sample(rng).max(1.0);
            let len = ((len_s * rate).round() as usize).min(n - start_min);
            let start = rng.random_range(start_min..=n - len);
            valid[start..start + len].iter_mut().for_each(|v| *v = false);
        }
    }
    for d in spec.dropouts.iter().filter(|d| d.kind == kind) {
        let len = ((d.fraction * n as f64).ceil() as usize).min(n - start_min);
        let start = rng.random_range(start_min..=n - len);
        valid[start..start + len].iter_mut().for_each(|v| *v = false);
    }
}

fn gen_behavior(spec: &SynthSpec, hr_level: f64, rng: &mut ChaCha8Rng) -> BehavioralRecord {
    let minutes = (spec.duration_s - spec.baseline_s) / 60.0;
    let mut counts = Vec::new();
    for f in SocialFeature::ALL {
        for c in [Condition::Spontaneous, Condition::Suggested, Condition::Indicated] {
            if !f.conditions().contains(&c) {
                continue;
            }
            // Spontaneous openings fall with the subject's heart-rate level.
            let base: f64 = if c == Condition::Spontaneous { 0.8 } else { 0.2 };
            let slope = if c == Condition::Spontaneous && f == SocialFeature::SoPeers { -0.4 } else { 0.0 };
            let lambda = minutes * (base.ln() + slope * hr_level).exp();
            let k = Poisson::new(lambda).map(|p| p.sample(rng) as u32).unwrap_or(0);
            counts.push((f, c, k));
        }
    }
    let likert = LikertItem::ALL.iter().map(|item| (*item, rng.random_range(0..=item.default_max()))).collect();
    BehavioralRecord::new(minutes, counts, likert, BTreeMap::new()).expect("generated counts are consistent")
}

fn gen_clinical(rng: &mut ChaCha8Rng) -> ClinicalProfile {
    let iq: Normal<f64> = Normal::new(95.0, 15.0).expect("valid normal");
    let ados = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| f64::from(rng.random_range(lo..=hi));
    ClinicalProfile {
        ados_comparison: ados(rng, 4, 10),
        ados_total: ados(rng, 8, 22),
        ados_sa: ados(rng, 5, 16),
        iq: iq.sample(rng).round().max(40.0),
        vci: iq.sample(rng).round().max(40.0),
        pri: iq.sample(rng).round().max(40.0),
        wmi: iq.sample(rng).round().max(40.0),
        psi: iq.sample(rng).round().max(40.0),
    }
}

/// One synthetic session and its ground truth.
pub fn gen_session(spec: &SynthSpec) -> Result<(Session, GroundTruth), SpecError> {
    use std::f64::consts::TAU;
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = (spec.duration_s * spec.rate_hz).round() as usize;
    let knots = spec.duration_s.ceil() as usize + 1;
    let window = (spec.baseline_s.ceil() as usize)..(spec.duration_s.ceil() as usize);

    let innov: Vec<f64> = (0..knots).map(|_| StandardNormal.sample(&mut rng)).collect();
    let phases = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
    let (rr, phi) = rr_knots(&spec.rr, &innov, phases, window.clone())?;

    let hr_innov: Vec<f64> = (0..knots).map(|_| StandardNormal.sample(&mut rng)).collect();
    let hr_ar = ar1(&hr_innov, 0.95);
    let (m, sd) = (mean(&hr_ar[window.clone()]), sample_sd(&hr_ar[window.clone()]));
    let hr: Vec<f64> = hr_ar.iter().map(|a| spec.hr.mean_bpm + spec.hr.sd_bpm * (a - m) / sd).collect();

    let bf_phase = rng.random::<f64>() * TAU;
    let f_bf = spec.bf.rate_bpm / 60.0;
    let bf: Vec<f64> = (0..knots)
        .map(|t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            spec.bf.rate_bpm + spec.bf.amplitude * (TAU * f_bf * t as f64 + bf_phase).sin() + spec.bf.noise_sd * e
        })
        .collect();

    let mut traces = Vec::new();
    let mut missing = BTreeMap::new();
    for (kind, series) in [(SignalKind::Hr, &hr), (SignalKind::Rr, &rr), (SignalKind::Bf, &bf)] {
        let mut samples: Vec<f64> = upsample(series, spec.rate_hz, n).into_iter().map(quantize).collect();
        let mut valid = vec![true; n];
        mark_gaps(&mut valid, spec, kind, &mut rng);
        for (s, v) in samples.iter_mut().zip(&valid) {
            if !v {
                *s = 0.0;
            }
        }
        missing.insert(kind, valid.iter().filter(|v| !**v).count() as f64 / n as f64);
        traces.push(SignalTrace::new(kind, spec.rate_hz, 0.0, samples, valid).expect("generated trace is well formed"));
    }

    let clinical = gen_clinical(&mut rng);
    let hr_level = (spec.hr.mean_bpm - 90.0) / 10.0;
    let behavior = spec.behavior.then(|| gen_behavior(spec, hr_level, &mut rng));
    let session = Session {
        meta: ParticipantMeta { subject_id: spec.subject_id.clone(), age_months: spec.age_months, sex: spec.sex },
        clinical: Some(clinical),
        session_index: spec.session_index,
        duration_s: spec.duration_s,
        traces,
        phases: spec.phases(),
        behavior,
    };
    if let Some((path, msg)) = session.invariant_violations().into_iter().next() {
        return invalid(format!("{path}: {msg}"));
    }
    let rr_w = &rr[window.clone()];
    let truth = GroundTruth {
        subject_id: spec.subject_id.clone(),
        session_index: spec.session_index,
        seed: spec.seed,
        sdnn_ms: sample_sd(rr_w),
        rmssd_ms: rmssd(rr_w),
        ar_coefficient: phi,
        hr_mean_bpm: spec.hr.mean_bpm,
        hr_sd_bpm: spec.hr.sd_bpm,
        breathing_rate_bpm: spec.bf.rate_bpm,
        lf_hz: spec.rr.lf_hz,
        hf_hz: spec.rr.hf_hz,
        missing_ratio: missing,
    };
    Ok((session, truth))
}

/// A set of subjects, each with consecutive sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub subjects: usize,
    pub sessions_per_subject: u8,
    pub duration_s: f64,
    pub gaps: GapSpec,
    /// How many sessions (the first ones) lose more than half of one trace;
    /// the affected signal rotates HR, RR, BF.
    pub heavy_dropouts: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { seed: 0, subjects: 10, sessions_per_subject: 3, duration_s: 600.0, gaps: GapSpec::default(), heavy_dropouts: 0 }
    }
}

/// Session specs of a corpus. Subject traits (age, sex, heart-rate level,
/// variability) are drawn once per subject.
pub fn corpus_specs(c: &CorpusSpec) -> Result<Vec<SynthSpec>, SpecError> {
    if c.subjects == 0 || !(1..=3).contains(&c.sessions_per_subject) {
        return invalid("need at least one subject and 1 to 3 sessions per subject");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut out = Vec::new();
    for s in 0..c.subjects {
        let subject_id = format!("SYN{:02}", s + 1);
        let age_months = rng.random_range(96..=216);
        let sex = if rng.random::<f64>() < 0.2 { Sex::F } else { Sex::M };
        let hr_mean = 80.0 + 20.0 * rng.random::<f64>();
        let sdnn = 40.0 + 30.0 * rng.random::<f64>();
        let rmssd = sdnn * (0.6 + 0.3 * rng.random::<f64>());
        let bf_rate = 12.0 + 8.0 * rng.random::<f64>();
        for k in 1..=c.sessions_per_subject {
            let tag = format!("{subject_id}/{k}");
            let mut spec = SynthSpec {
                seed: c.seed ^ fnv1a(tag.as_bytes()),
                subject_id: subject_id.clone(),
                session_index: k,
                age_months,
                sex,
                duration_s: c.duration_s,
                hr: HrProfile { mean_bpm: hr_mean + f64::from(k), sd_bpm: 4.0 + f64::from(k) },
                rr: RrProfile { mean_ms: 60000.0 / hr_mean, sdnn_ms: sdnn, rmssd_ms: rmssd, ..RrProfile::default() },
                bf: BfProfile { rate_bpm: bf_rate, ..BfProfile::default() },
                gaps: c.gaps.clone(),
                ..SynthSpec::default()
            };
            let idx = out.len();
            if idx < c.heavy_dropouts {
                let room = (c.duration_s - spec.baseline_s) / c.duration_s;
                spec.dropouts.push(Dropout { kind: SignalKind::ALL[idx % 3], fraction: (0.6f64).min(room) });
            }
            out.push(spec);
        }
    }
    Ok(out)
}

/// All sessions of a corpus, generated in parallel; order follows
/// [`corpus_specs`].
pub fn gen_corpus(c: &CorpusSpec) -> Result<Vec<(Session, GroundTruth)>, SpecError> {
    corpus_specs(c)?.par_iter().map(gen_session).collect()
}

/// Log-link regression data with standardized predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmDataset {
    pub y: Vec<f64>,
    /// One standardized predictor per entry.
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
    /// Intercept first.
    pub beta: Vec<f64>,
}

/// `beta[0]` is the intercept. Gamma responses use the given shape.
pub fn gen_glm_dataset(family: Family, beta: &[f64], n: usize, gamma_shape: f64, seed: u64) -> Result<GlmDataset, SpecError> {
    if beta.is_empty() || n < 10 * beta.len() {
        return invalid(format!("need n ≥ 10·len(beta) = {}, got {n}", 10 * beta.len()));
    }
    if family == Family::Gamma && !(gamma_shape > 0.0) {
        return invalid("Gamma shape must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (1..beta.len())
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (m, sd) = (mean(&raw), sample_sd(&raw));
            raw.iter().map(|x| (x - m) / sd).collect()
        })
        .collect();
    let y = (0..n)
        .map(|i| {
            let eta = beta[0] + columns.iter().zip(&beta[1..]).map(|(c, b)| b * c[i]).sum::<f64>();
            let mu = eta.exp();
            match family {
                Family::Poisson => Poisson::new(mu).map(|p| p.sample(&mut rng)).map_err(|e| SpecError::Infeasible(e.to_string())),
                Family::Gamma => Ok(Gamma::new(gamma_shape, mu / gamma_shape).expect("positive parameters").sample(&mut rng)),
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let names = (1..beta.len()).map(|j| format!("x{j}")).collect();
    Ok(GlmDataset { y, columns, names, beta: beta.to_vec() })
}

/// Isotropic unit-variance Gaussian blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

/// Blob centres are `separation` apart: pairwise when `dim ≥ k` (scaled
/// basis vectors), otherwise consecutively along the first axis.
pub fn gen_blobs(k: usize, n_per: usize, separation: f64, dim: usize, seed: u64) -> Result<Blobs, SpecError> {
    if k == 0 || n_per == 0 || dim == 0 || !(separation >= 0.0) {
        return invalid("need k ≥ 1, n_per ≥ 1, dim ≥ 1 and a non-negative separation");
    }
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut v = vec![0.0; dim];
            if dim >= k {
                v[c] = separation / std::f64::consts::SQRT_2;
            } else {
                v[0] = separation * c as f64;
            }
            v
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(k * n_per);
    let mut labels = Vec::with_capacity(k * n_per);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            rows.push(
                center
                    .iter()
                    .map(|m| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        m + e
                    })
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
        }
    }
    Ok(Blobs { rows, labels, centers })
}
