//! Welch power spectral density and band integration.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::FeatureError;

/// Fewest samples the estimator accepts.
pub const MIN_WELCH_SAMPLES: usize = 64;

/// LF and HF bands in Hz, closed on the left and open on the right.
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.4);

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub densities: Vec<f64>,
    /// Set when the series was shorter than one segment and was analyzed as
    /// a single segment of its own length.
    pub short_segment: bool,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Rectangle-rule power over bins with `lo <= f < hi`.
    pub fn power_in(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution();
        self.freqs
            .iter()
            .zip(&self.densities)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, d)| d * df)
            .sum()
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate: Hann-tapered, mean-detrended segments of `seg_len_s`
/// seconds with fractional `overlap`, averaged periodograms, density scaling.
pub fn welch_psd(series: &[f64], rate_hz: f64, seg_len_s: f64, overlap: f64) -> Result<Spectrum, FeatureError> {
    let n = series.len();
    if n < MIN_WELCH_SAMPLES {
        return Err(FeatureError::TooShort { needed: MIN_WELCH_SAMPLES, got: n });
    }
    let wanted = (seg_len_s * rate_hz).round().max(1.0) as usize;
    let short_segment = n < wanted;
    let nperseg = wanted.min(n);
    let step = ((nperseg as f64 * (1.0 - overlap)).round() as usize).clamp(1, nperseg);
    let window = hann(nperseg);
    let scale = 1.0 / (rate_hz * window.iter().map(|w| w * w).sum::<f64>());

    let fft = FftPlanner::<f64>::new().plan_fft_forward(nperseg);
    let bins = nperseg / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];
    let mut start = 0;
    while start + nperseg <= n {
        let seg = &series[start..start + nperseg];
        let m = seg.iter().sum::<f64>() / nperseg as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let mut densities: Vec<f64> = acc.iter().map(|a| a * scale / segments as f64).collect();
    // Fold the negative frequencies in; DC and (for even lengths) Nyquist
    // have no mirror image.
    let last_unpaired = nperseg % 2 == 0;
    for (k, d) in densities.iter_mut().enumerate() {
        if k != 0 && !(last_unpaired && k == bins - 1) {
            *d *= 2.0;
        }
    }
    let freqs = (0..bins).map(|k| k as f64 * rate_hz / nperseg as f64).collect();
    Ok(Spectrum { freqs, densities, short_segment })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPowers {
    pub tp: f64,
    pub lf: f64,
    pub hf: f64,
    /// `None` when HF power is below 1e-12.
    pub lf_hf_ratio: Option<f64>,
}

/// LF, HF and total power. Total power covers every bin above 0 Hz.
pub fn band_powers(spectrum: &Spectrum) -> SpectralPowers {
    let lf = spectrum.power_in(LF_BAND.0, LF_BAND.1);
    let hf = spectrum.power_in(HF_BAND.0, HF_BAND.1);
    let tp = spectrum.power_in(f64::MIN_POSITIVE, f64::INFINITY);
    SpectralPowers { tp, lf, hf, lf_hf_ratio: (hf >= 1e-12).then(|| lf / hf) }
}
