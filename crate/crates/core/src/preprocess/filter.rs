//! Zero-phase Butterworth low-pass filtering with second-order sections.

use rustfft::num_complex::Complex64;

/// One second-order section in transposed direct form II, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// State that makes a constant input of 1 pass without transient.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }
}

/// Digital Butterworth low-pass of the given order via the bilinear transform
/// with frequency pre-warping. Each section is normalized to unit DC gain.
pub fn butter_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Vec<Biquad> {
    assert!(order >= 1);
    assert!(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0);
    let fs2 = 2.0 * rate_hz;
    let warped = fs2 * (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
    let bilinear = |s: Complex64| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s);

    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = std::f64::consts::PI * (2 * k + 1 + order) as f64 / (2 * order) as f64;
        let pole = bilinear(Complex64::from_polar(warped, theta));
        let a = [1.0, -2.0 * pole.re, pole.norm_sqr()];
        let g = (a[0] + a[1] + a[2]) / 4.0;
        sections.push(Biquad { b: [g, 2.0 * g, g], a });
    }
    if order % 2 == 1 {
        let pole = bilinear(Complex64::new(-warped, 0.0)).re;
        let g = (1.0 - pole) / 2.0;
        sections.push(Biquad { b: [g, g, 0.0], a: [1.0, -pole, 0.0] });
    }
    sections
}

/// Filters `x` through the cascade. `zi` holds one state pair per section
/// and is updated in place.
pub fn sosfilt(sos: &[Biquad], x: &[f64], zi: &mut [[f64; 2]]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (s, z) in sos.iter().zip(zi.iter_mut()) {
        let [b0, b1, b2] = s.b;
        let [_, a1, a2] = s.a;
        let (mut z1, mut z2) = (z[0], z[1]);
        for v in y.iter_mut() {
            let xin = *v;
            let out = b0 * xin + z1;
            z1 = b1 * xin - a1 * out + z2;
            z2 = b2 * xin - a2 * out;
            *v = out;
        }
        *z = [z1, z2];
    }
    y
}

/// Initial states for a step of height 1 through the whole cascade.
fn cascade_steady_state(sos: &[Biquad]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let [z1, z2] = s.steady_state();
            let zi = [z1 * scale, z2 * scale];
            scale *= s.dc_gain();
            zi
        })
        .collect()
}

/// Forward-backward filtering with odd-reflection padding and steady-state
/// initial conditions, matching the usual `sosfiltfilt` construction.
pub fn sosfiltfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let zeros_b = sos.iter().filter(|s| s.b[2] == 0.0).count();
    let zeros_a = sos.iter().filter(|s| s.a[2] == 0.0).count();
    let ntaps = 2 * sos.len() + 1 - zeros_b.min(zeros_a);
    let pad = (3 * ntaps).min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = cascade_steady_state(sos);
    let scaled = |x0: f64| zi.iter().map(|[a, b]| [a * x0, b * x0]).collect::<Vec<_>>();

    let mut state = scaled(ext[0]);
    let mut y = sosfilt(sos, &ext, &mut state);
    y.reverse();
    let mut state = scaled(y[0]);
    let mut y = sosfilt(sos, &y, &mut state);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Fills invalid runs by linear interpolation between the nearest valid
/// samples (nearest value at the ends). Returns `None` if nothing is valid.
pub(crate) fn bridge_gaps(samples: &[f64], valid: &[bool]) -> Option<Vec<f64>> {
    let first = valid.iter().position(|v| *v)?;
    let last = valid.iter().rposition(|v| *v)?;
    let mut out = samples.to_vec();
    for v in out.iter_mut().take(first) {
        *v = samples[first];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = samples[last];
    }
    let mut prev = first;
    for i in first + 1..=last {
        if valid[i] {
            if i > prev + 1 {
                let span = (i - prev) as f64;
                for j in prev + 1..i {
                    let w = (j - prev) as f64 / span;
                    out[j] = samples[prev] * (1.0 - w) + samples[i] * w;
                }
            }
            prev = i;
        }
    }
    Some(out)
}
