//! Savitzky–Golay smoothing and peak detection for the respiration signal.

use nalgebra::{DMatrix, DVector};

use super::FeatureError;
use crate::numeric::{mean, sample_sd};

/// Fewest samples [`find_peaks`] accepts.
pub const MIN_PEAK_SAMPLES: usize = 10;

/// Weights that evaluate, at offset 0, the least-squares polynomial of degree
/// `order` through samples at the given offsets.
fn fit_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let order = order.min(offsets.len() - 1);
    // Scaling the abscissa keeps the Vandermonde matrix well conditioned and
    // leaves the value at 0 unchanged.
    let scale = offsets.iter().fold(1.0f64, |m, o| m.max(o.abs()));
    let a = DMatrix::from_fn(offsets.len(), order + 1, |r, c| (offsets[r] / scale).powi(c as i32));
    let qr = a.qr();
    let r = qr.r();
    let mut e0 = DVector::zeros(order + 1);
    e0[0] = 1.0;
    // Row 0 of R⁻¹Qᵀ, i.e. Q·R⁻ᵀ·e0.
    let z = r.transpose().solve_lower_triangular(&e0).expect("full-rank Vandermonde");
    (qr.q() * z).iter().copied().collect()
}

/// Window length in samples for `window_s` seconds, rounded and forced odd.
pub fn savgol_window_len(window_s: f64, rate_hz: f64) -> usize {
    let n = (window_s * rate_hz).round() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Local polynomial least-squares smoothing. Near the ends the window is
/// truncated to the samples that exist and the fit uses only those.
pub fn savgol(series: &[f64], rate_hz: f64, window_s: f64, poly_order: usize) -> Result<Vec<f64>, FeatureError> {
    let window = savgol_window_len(window_s, rate_hz);
    if window <= poly_order {
        return Err(FeatureError::WindowTooSmall { window, poly_order });
    }
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let half = window / 2;
    let centered: Vec<f64> = (0..window).map(|j| j as f64 - half as f64).collect();
    let interior = fit_weights(&centered, poly_order);

    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let span = &series[lo..=hi];
        *o = if hi - lo + 1 == window {
            interior.iter().zip(span).map(|(w, x)| w * x).sum()
        } else {
            let offsets: Vec<f64> = (lo..=hi).map(|j| j as f64 - i as f64).collect();
            fit_weights(&offsets, poly_order).iter().zip(span).map(|(w, x)| w * x).sum()
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PeakParams {
    /// Height threshold in SDs above the series mean.
    pub height_k: f64,
    /// Prominence threshold in SDs.
    pub prominence_k: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { height_k: 2.0, prominence_k: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespirationPeaks {
    pub indices: Vec<usize>,
    pub prominences: Vec<f64>,
    /// Width at half prominence, in seconds.
    pub widths_s: Vec<f64>,
    pub duration_s: f64,
}

impl RespirationPeaks {
    /// Peaks per minute.
    pub fn prate(&self) -> f64 {
        60.0 * self.indices.len() as f64 / self.duration_s
    }

    /// `None` when no peak was found.
    pub fn mean_prominence(&self) -> Option<f64> {
        (!self.prominences.is_empty()).then(|| mean(&self.prominences))
    }

    pub fn mean_width(&self) -> Option<f64> {
        (!self.widths_s.is_empty()).then(|| mean(&self.widths_s))
    }
}

/// Local maxima; a flat top counts once, at its middle (left of center for
/// even-length plateaus).
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Prominence and the two base indices of one peak.
fn prominence(x: &[f64], peak: usize) -> (f64, usize, usize) {
    let top = x[peak];
    let (mut left_min, mut left_base) = (top, peak);
    let mut i = peak;
    loop {
        if x[i] > top {
            break;
        }
        if x[i] < left_min {
            left_min = x[i];
            left_base = i;
        }
        if i == 0 {
            break;
        }
        i -= 1;
    }
    let (mut right_min, mut right_base) = (top, peak);
    for (j, v) in x.iter().enumerate().skip(peak) {
        if *v > top {
            break;
        }
        if *v < right_min {
            right_min = *v;
            right_base = j;
        }
    }
    (top - left_min.max(right_min), left_base, right_base)
}

/// Width in samples at `top − prominence/2`, with linear interpolation
/// between the samples that straddle that level, bounded by the bases.
fn half_prominence_width(x: &[f64], peak: usize, prom: f64, left_base: usize, right_base: usize) -> f64 {
    let level = x[peak] - prom / 2.0;
    let mut i = peak;
    while left_base < i && level < x[i] {
        i -= 1;
    }
    let mut left = i as f64;
    if x[i] < level {
        left += (level - x[i]) / (x[i + 1] - x[i]);
    }
    let mut j = peak;
    while j < right_base && level < x[j] {
        j += 1;
    }
    let mut right = j as f64;
    if x[j] < level {
        right -= (level - x[j]) / (x[j - 1] - x[j]);
    }
    right - left
}

/// Peaks at or above `mean + height_k·SD` with prominence at least
/// `prominence_k·SD`, both statistics taken from `series` itself (sample SD).
pub fn find_peaks(series: &[f64], rate_hz: f64, params: PeakParams) -> Result<RespirationPeaks, FeatureError> {
    if series.len() < MIN_PEAK_SAMPLES {
        return Err(FeatureError::TooShort { needed: MIN_PEAK_SAMPLES, got: series.len() });
    }
    let sd = sample_sd(series);
    let height = mean(series) + params.height_k * sd;
    let min_prominence = params.prominence_k * sd;

    let mut out = RespirationPeaks {
        indices: Vec::new(),
        prominences: Vec::new(),
        widths_s: Vec::new(),
        duration_s: series.len() as f64 / rate_hz,
    };
    for p in local_maxima(series) {
        if series[p] < height {
            continue;
        }
        let (prom, lb, rb) = prominence(series, p);
        if prom < min_prominence {
            continue;
        }
        out.indices.push(p);
        out.prominences.push(prom);
        out.widths_s.push(half_prominence_width(series, p, prom, lb, rb) / rate_hz);
    }
    Ok(out)
}
