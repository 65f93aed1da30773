use std::f64::consts::TAU;

use proptest::prelude::*;

use super::*;
use crate::session::{ParticipantMeta, PhaseAnnotation, Sex};

fn trace(rate: f64, samples: Vec<f64>) -> SignalTrace {
    SignalTrace::from_samples(SignalKind::Hr, rate, 0.0, samples).unwrap()
}

/// Amplitude of the component at `freq` via a single-bin DFT.
fn dft_amplitude(x: &[f64], rate: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let phase = TAU * freq * i as f64 / rate;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    2.0 * (re * re + im * im).sqrt() / x.len() as f64
}

#[test]
fn lowpass_keeps_constant() {
    let t = trace(128.0, vec![72.0; 128 * 30]);
    let y = lowpass(&t, &PreprocessConfig::default()).unwrap();
    assert!(y.samples().iter().all(|v| (v - 72.0).abs() < 1e-9));
    assert_eq!(y.rate_hz(), 128.0);
}

#[test]
fn lowpass_separates_slow_and_fast_tones() {
    let rate = 128.0;
    let n = (200.0 * rate) as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            (TAU * 0.05 * t).sin() + (TAU * 5.0 * t).sin()
        })
        .collect();
    assert!((dft_amplitude(&x, rate, 0.05) - 1.0).abs() < 1e-9);
    let y = lowpass(&trace(rate, x), &PreprocessConfig::default()).unwrap();
    let slow = dft_amplitude(y.samples(), rate, 0.05);
    let fast = dft_amplitude(y.samples(), rate, 5.0);
    assert!((slow - 1.0).abs() < 0.01, "slow tone amplitude {slow}");
    assert!(20.0 * fast.log10() <= -40.0, "fast tone amplitude {fast}");
}

#[test]
fn lowpass_rejects_cutoff_above_nyquist() {
    let cfg = PreprocessConfig { lp_cutoff_hz: 1.0, ..Default::default() };
    assert!(matches!(lowpass(&trace(1.0, vec![1.0; 10]), &cfg), Err(PreprocessError::CutoffTooHigh { .. })));
}

#[test]
fn lowpass_leaves_masked_samples_alone() {
    let mut valid = vec![true; 1280];
    let mut samples: Vec<f64> = (0..1280).map(|i| (i as f64 / 300.0).sin()).collect();
    for i in 500..600 {
        valid[i] = false;
        samples[i] = -99.0;
    }
    let t = SignalTrace::new(SignalKind::Bf, 128.0, 0.0, samples, valid.clone()).unwrap();
    let y = lowpass(&t, &PreprocessConfig::default()).unwrap();
    assert_eq!(y.valid(), valid.as_slice());
    assert!(y.samples()[500..600].iter().all(|v| *v == -99.0));
    assert!(y.samples()[..500].iter().all(|v| v.abs() < 2.0));
}

#[test]
fn resample_constant() {
    let y = resample_to_1hz(&trace(128.0, vec![72.0; 128 * 20])).unwrap();
    assert_eq!(y.rate_hz(), 1.0);
    assert_eq!(y.len(), 20);
    assert!(y.samples().iter().all(|v| *v == 72.0));
}

#[test]
fn resample_ramp_is_exact() {
    let rate = 128.0;
    let x: Vec<f64> = (0..(rate as usize * 60)).map(|i| i as f64 / rate).collect();
    let y = resample_to_1hz(&trace(rate, x)).unwrap();
    for (k, v) in y.samples().iter().enumerate() {
        assert!((v - k as f64).abs() < 1e-9);
    }
}

#[test]
fn resample_between_grid_points_interpolates() {
    // 0.4 Hz input: t = 0, 2.5, 5, ... so integer seconds fall between samples.
    let t = SignalTrace::from_samples(SignalKind::Rr, 0.4, 0.0, vec![0.0, 10.0, 20.0, 30.0]).unwrap();
    let y = resample_to_1hz(&t).unwrap();
    let expected: Vec<f64> = (0..=7).map(|k| k as f64 * 4.0).collect();
    assert_eq!(y.len(), expected.len());
    for (a, b) in y.samples().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn resample_gap_of_three_seconds() {
    let rate = 128.0;
    let n = rate as usize * 20;
    let valid: Vec<bool> = (0..n).map(|i| !(1280..1664).contains(&i)).collect();
    let t = SignalTrace::new(SignalKind::Hr, rate, 0.0, vec![1.0; n], valid).unwrap();
    let y = resample_to_1hz(&t).unwrap();
    let masked: Vec<usize> = (0..y.len()).filter(|i| !y.valid()[*i]).collect();
    assert_eq!(masked, vec![10, 11, 12]);

    // An unaligned gap of the same length still masks three seconds.
    let valid: Vec<bool> = (0..n).map(|i| !(1318..1702).contains(&i)).collect();
    let t = SignalTrace::new(SignalKind::Hr, rate, 0.0, vec![1.0; n], valid).unwrap();
    let y = resample_to_1hz(&t).unwrap();
    assert_eq!(y.invalid_count(), 3);
}

fn with_mask(invalid: usize, n: usize) -> SignalTrace {
    let valid: Vec<bool> = (0..n).map(|i| i >= invalid).collect();
    SignalTrace::new(SignalKind::Hr, 1.0, 0.0, vec![0.0; n], valid).unwrap()
}

#[test]
fn missing_ratio_examples() {
    assert_eq!(missing_ratio(&with_mask(0, 100)).unwrap(), 0.0);
    let half = missing_ratio(&with_mask(50, 100)).unwrap();
    assert_eq!(half, 0.5);
    assert!(!(half > PreprocessConfig::default().missing_exclusion_ratio));
    let over = missing_ratio(&with_mask(51, 100)).unwrap();
    assert_eq!(over, 0.51);
    assert!(over > PreprocessConfig::default().missing_exclusion_ratio);
}

#[test]
fn rf_identity_without_gaps() {
    let t = trace(1.0, (0..50).map(|i| (i as f64).sqrt()).collect());
    assert_eq!(rf_interpolate(&t, &PreprocessConfig::default()).unwrap(), t);
}

#[test]
fn rf_fills_constant_exactly() {
    let valid: Vec<bool> = (0..300).map(|i| !(40..55).contains(&i) && !(200..230).contains(&i)).collect();
    let samples: Vec<f64> = valid.iter().map(|v| if *v { 71.3 } else { 0.0 }).collect();
    let t = SignalTrace::new(SignalKind::Hr, 1.0, 0.0, samples, valid).unwrap();
    let y = rf_interpolate(&t, &PreprocessConfig::default()).unwrap();
    assert!(y.is_fully_valid());
    assert!(y.samples().iter().all(|v| (v - 71.3).abs() < 1e-9));
}

#[test]
fn rf_fills_slow_sinusoid_gap() {
    let truth = |t: f64| (TAU * t / 300.0).sin();
    let n = 900;
    let valid: Vec<bool> = (0..n).map(|i| !(400..410).contains(&i)).collect();
    let samples: Vec<f64> = (0..n).map(|i| if valid[i] { truth(i as f64) } else { 0.0 }).collect();
    let t = SignalTrace::new(SignalKind::Rr, 1.0, 0.0, samples, valid.clone()).unwrap();
    let y = rf_interpolate(&t, &PreprocessConfig::default()).unwrap();
    for i in 400..410 {
        let err = (y.samples()[i] - truth(i as f64)).abs();
        assert!(err < 0.15, "sample {i}: error {err}");
    }
    for i in (0..n).filter(|i| valid[*i]) {
        assert_eq!(y.samples()[i], t.samples()[i]);
    }
}

#[test]
fn rf_needs_ten_valid_samples() {
    let valid: Vec<bool> = (0..30).map(|i| i < 9).collect();
    let t = SignalTrace::new(SignalKind::Hr, 1.0, 0.0, vec![1.0; 30], valid).unwrap();
    assert!(matches!(rf_interpolate(&t, &PreprocessConfig::default()), Err(PreprocessError::TooSparse { valid: 9, .. })));
}

#[test]
fn baseline_identical_values_degenerate() {
    assert_eq!(baseline_stats(&trace(1.0, vec![3.0; 100]), 0.05), Err(PreprocessError::DegenerateBaseline));
}

#[test]
fn baseline_of_one_to_hundred() {
    let s = baseline_stats(&trace(1.0, (1..=100).map(f64::from).collect()), 0.05).unwrap();
    // Hand computation: p5 = 5 + 0.95, p95 = 95 + 0.05; the clipped vector is
    // symmetric about 50.5.
    assert!((s.lower - 5.95).abs() < 1e-12);
    assert!((s.upper - 95.05).abs() < 1e-12);
    assert!((s.mean - 50.5).abs() < 1e-12);
    let mut clipped: Vec<f64> = (1..=100).map(|v| f64::from(v).clamp(5.95, 95.05)).collect();
    let m = clipped.iter().sum::<f64>() / 100.0;
    clipped.iter_mut().for_each(|v| *v = (*v - m).powi(2));
    let sd = (clipped.iter().sum::<f64>() / 99.0).sqrt();
    assert!((s.sd - sd).abs() < 1e-12);
}

#[test]
fn baseline_outlier_is_clipped() {
    let mut xs: Vec<f64> = (0..99).map(|i| ((i * 37 % 99) as f64 - 49.0) / 490.0).collect();
    xs.push(1e6);
    let s = baseline_stats(&trace(1.0, xs), 0.05).unwrap();
    assert!(s.mean.abs() <= s.upper.abs().max(s.lower.abs()));
    assert!(s.upper < 1.0);
}

#[test]
fn baseline_requirements() {
    assert!(matches!(baseline_stats(&trace(1.0, vec![1.0; 19]), 0.05), Err(PreprocessError::TooShort { .. })));
    let masked = SignalTrace::new(SignalKind::Hr, 1.0, 0.0, (0..30).map(f64::from).collect(), (0..30).map(|i| i != 3).collect()).unwrap();
    assert_eq!(baseline_stats(&masked, 0.05), Err(PreprocessError::MaskedBaseline));
}

#[test]
fn normalize_examples() {
    let stats = BaselineStats { mean: 10.0, sd: 2.5, lower: 0.0, upper: 20.0 };
    let flat = normalize(&trace(1.0, vec![10.0; 5]), &stats).unwrap();
    assert!(flat.samples().iter().all(|v| *v == 0.0));
    let one = normalize(&trace(1.0, vec![12.5]), &stats).unwrap();
    assert_eq!(one.samples()[0], 1.0);
    let zero_sd = BaselineStats { sd: 0.0, ..stats };
    assert_eq!(normalize(&trace(1.0, vec![1.0]), &zero_sd), Err(PreprocessError::DegenerateBaseline));
}

#[test]
fn normalizing_twice_is_stable() {
    let base = trace(1.0, (0..120).map(|i| 60.0 + 5.0 * (i as f64 * 0.37).sin() + (i % 7) as f64).collect());
    let stats = baseline_stats(&base, 0.05).unwrap();
    let once = normalize(&base, &stats).unwrap();
    let again = baseline_stats(&once, 0.05).unwrap();
    assert!(again.mean.abs() < 1e-12);
    assert!((again.sd - 1.0).abs() < 1e-12);
    let twice = normalize(&once, &again).unwrap();
    for (a, b) in once.samples().iter().zip(twice.samples()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn session_128hz(duration: usize, bf_missing: f64) -> Session {
    let rate = 128.0;
    let n = duration * rate as usize;
    let make = |kind, f: &dyn Fn(f64) -> f64, missing: f64| {
        let samples: Vec<f64> = (0..n).map(|i| f(i as f64 / rate)).collect();
        let cut = ((1.0 - missing) * n as f64) as usize;
        let valid: Vec<bool> = (0..n).map(|i| i < cut).collect();
        SignalTrace::new(kind, rate, 0.0, samples, valid).unwrap()
    };
    Session {
        meta: ParticipantMeta { subject_id: "T1".into(), age_months: 140, sex: Sex::F },
        clinical: None,
        session_index: 1,
        duration_s: duration as f64,
        traces: vec![
            make(SignalKind::Hr, &|t| 80.0 + 3.0 * (t / 20.0).sin() + (t / 3.1).cos(), 0.0),
            make(SignalKind::Rr, &|t| 750.0 + 30.0 * (t / 17.0).sin() + 5.0 * (t / 2.3).cos(), 0.0),
            make(SignalKind::Bf, &|t| 18.0 + 2.0 * (t / 9.0).sin(), bf_missing),
        ],
        phases: vec![
            PhaseAnnotation::new(PhaseLabel::Baseline, 0.0, 119.0),
            PhaseAnnotation::new(PhaseLabel::Coin, 119.0, duration as f64),
        ],
        behavior: None,
    }
}

#[test]
fn pipeline_normalizes_against_baseline() {
    let s = session_128hz(300, 0.0);
    let out = run_preprocess(&s, &PreprocessConfig::default()).unwrap();
    assert_eq!(out.session.traces.len(), 3);
    for t in &out.session.traces {
        assert_eq!(t.rate_hz(), 1.0);
        assert!(t.is_fully_valid());
        let base = crate::session::slice_phase(&out.session, t.kind(), PhaseLabel::Baseline).unwrap();
        let st = baseline_stats(&base, 0.05).unwrap();
        assert!(st.mean.abs() <= 1e-9, "{}: mean {}", t.kind(), st.mean);
        assert!((st.sd - 1.0).abs() <= 1e-9, "{}: sd {}", t.kind(), st.sd);
    }
    assert_eq!(out.log.records.len(), 3);
    assert!(out.log.dropped().next().is_none());
    let hr = out.physical_values(SignalKind::Hr).unwrap();
    assert!((hr[150] - (80.0 + 3.0 * (150.0f64 / 20.0).sin() + (150.0f64 / 3.1).cos())).abs() < 0.5);
}

#[test]
fn pipeline_drops_mostly_missing_trace() {
    let s = session_128hz(300, 0.6);
    let out = run_preprocess(&s, &PreprocessConfig::default()).unwrap();
    let kinds: Vec<_> = out.session.traces.iter().map(|t| t.kind()).collect();
    assert_eq!(kinds, vec![SignalKind::Hr, SignalKind::Rr]);
    let dropped: Vec<_> = out.log.dropped().collect();
    assert_eq!(dropped.len(), 1);
    assert_eq!(dropped[0].kind, SignalKind::Bf);
    assert!(dropped[0].missing_ratio > 0.5);
    let lines = out.log.to_json_lines();
    assert_eq!(lines.lines().count(), 3);
    assert!(lines.lines().nth(2).unwrap().contains("\"dropped\":true"));
}

#[test]
fn pipeline_requires_baseline() {
    let mut s = session_128hz(200, 0.0);
    s.phases.retain(|p| p.label != PhaseLabel::Baseline);
    match run_preprocess(&s, &PreprocessConfig::default()) {
        Err(PreprocessError::DegeneratePipeline(msg)) => assert!(msg.contains("Baseline")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pipeline_is_deterministic() {
    let mut s = session_128hz(200, 0.0);
    let n = s.traces[1].len();
    let valid: Vec<bool> = (0..n).map(|i| !(128 * 150..128 * 162).contains(&i)).collect();
    s.traces[1] = SignalTrace::new(SignalKind::Rr, 128.0, 0.0, s.traces[1].samples().to_vec(), valid).unwrap();
    let cfg = PreprocessConfig { rf_trees: 20, ..Default::default() };
    let a = run_preprocess(&s, &cfg).unwrap();
    let b = run_preprocess(&s, &cfg).unwrap();
    let bits = |p: &PreprocessedSession| -> Vec<u64> {
        p.session.traces.iter().flat_map(|t| t.samples().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn early_stages_never_unmask(mask in prop::collection::vec(prop::bool::weighted(0.8), 64..400),
                                 rate in prop::sample::select(vec![4.0, 16.0, 128.0])) {
        let samples: Vec<f64> = (0..mask.len()).map(|i| (i as f64 * 0.1).sin()).collect();
        let t = SignalTrace::new(SignalKind::Hr, rate, 0.0, samples, mask.clone()).unwrap();
        let f = lowpass(&t, &PreprocessConfig::default()).unwrap();
        prop_assert_eq!(f.valid(), mask.as_slice());
        let r = resample_to_1hz(&f).unwrap();
        for (k, v) in r.valid().iter().enumerate() {
            if *v {
                // Every input sample within one input period of t = k must be valid.
                let pos = k as f64 * rate;
                let lo = pos.floor() as usize;
                let hi = (pos.ceil() as usize).min(mask.len() - 1);
                prop_assert!(mask[lo] && mask[hi]);
            }
        }
    }

    #[test]
    fn winsorized_mean_within_percentiles(xs in prop::collection::vec(-1e3..1e3f64, 20..200)) {
        prop_assume!(sample_sd(&xs) > 1e-6);
        let t = SignalTrace::from_samples(SignalKind::Hr, 1.0, 0.0, xs.clone()).unwrap();
        if let Ok(s) = baseline_stats(&t, 0.05) {
            let lo = crate::numeric::percentile(&xs, 5.0);
            let hi = crate::numeric::percentile(&xs, 95.0);
            prop_assert!(s.mean >= lo - 1e-9 && s.mean <= hi + 1e-9);
        }
    }

    #[test]
    fn normalization_is_affine_equivariant(xs in prop::collection::vec(-50.0..50.0f64, 30..120),
                                           a in 0.1..20.0f64, b in -100.0..100.0f64) {
        let base = SignalTrace::from_samples(SignalKind::Hr, 1.0, 0.0, xs.clone()).unwrap();
        prop_assume!(baseline_stats(&base, 0.05).is_ok());
        let stats = baseline_stats(&base, 0.05).unwrap();
        let moved = SignalTrace::from_samples(SignalKind::Hr, 1.0, 0.0, xs.iter().map(|x| a * x + b).collect()).unwrap();
        let stats_moved = baseline_stats(&moved, 0.05).unwrap();
        let z1 = normalize(&base, &stats).unwrap();
        let z2 = normalize(&moved, &stats_moved).unwrap();
        for (u, v) in z1.samples().iter().zip(z2.samples()) {
            prop_assert!((u - v).abs() < 1e-9, "{} vs {}", u, v);
        }
    }
}
