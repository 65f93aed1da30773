//! Shapiro–Wilk normality test (Royston's approximation) and moment shape
//! statistics.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{std_normal, StatsError};
use crate::features::descriptive;

/// Polynomial c[0] + c[1]·x + c[2]·x² + …
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

/// Half of the antisymmetric coefficient vector, largest first.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let nd: Normal = std_normal();
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half).map(|i| nd.inverse_cdf((i as f64 - 0.375) / an25)).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        (2, fac)
    } else {
        (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Shapiro–Wilk W and its p-value for 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = xs.len();
    if !(3..=5000).contains(&n) {
        return Err(StatsError::OutOfRange(n));
    }
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] < 1e-19 {
        return Err(StatsError::ConstantInput);
    }
    let a = coefficients(n);
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssq: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let w = (num * num / ssq).min(1.0);

    if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0);
        return Ok((w, p.clamp(0.0, 1.0)));
    }
    let an = n as f64;
    let mut y = (1.0 - w).ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let xx = an.ln();
        (poly(&C5, xx), poly(&C6, xx).exp())
    };
    Ok((w, std_normal().sf((y - m) / s)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionDiagnostics {
    /// Moment skewness g1.
    pub skewness: f64,
    /// Excess (Fisher) kurtosis g2.
    pub excess_kurtosis: f64,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
}

pub fn diagnostics(xs: &[f64]) -> Result<DistributionDiagnostics, StatsError> {
    let (shapiro_w, shapiro_p) = shapiro_wilk(xs)?;
    let d = descriptive(xs).map_err(|_| StatsError::TooShort { needed: 3, got: xs.len() })?;
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - d.mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - d.mean).powi(3)).sum::<f64>() / n;
    Ok(DistributionDiagnostics {
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: d.kurtosis.ok_or(StatsError::ConstantInput)?,
        shapiro_w,
        shapiro_p,
    })
}

/// Normal QQ pairs `(theoretical, observed)`: sorted data against standard
/// normal quantiles at Blom positions `(i − 0.375)/(n + 0.25)`.
pub fn qq_normal(xs: &[f64]) -> Vec<(f64, f64)> {
    let nd = std_normal();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, x)| (nd.inverse_cdf((i as f64 + 0.625) / (n + 0.25)), *x)).collect()
}
