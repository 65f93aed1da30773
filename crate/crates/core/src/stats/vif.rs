//! Variance inflation factors and iterative collinearity screening.

use nalgebra::{DMatrix, DVector};

use super::StatsError;

pub const VIF_THRESHOLD: f64 = 5.0;

/// Least-squares R² of `y` on `xs` plus an intercept. SVD-based, so
/// collinear regressors are fine.
fn r_squared(y: &[f64], xs: &[&[f64]]) -> f64 {
    let n = y.len();
    let a = DMatrix::from_fn(n, xs.len() + 1, |r, c| if c == 0 { 1.0 } else { xs[c - 1][r] });
    let b = DVector::from_column_slice(y);
    let beta = a.clone().svd(true, true).solve(&b, 1e-12).expect("svd with both factors");
    let resid = &b - &a * beta;
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return 1.0;
    }
    1.0 - resid.norm_squared() / sst
}

/// VIF of every column (each column holds one variable's n values).
/// Columns that are exact linear combinations of the others, or constant,
/// get an infinite VIF.
pub fn vif_values(columns: &[Vec<f64>]) -> Vec<f64> {
    (0..columns.len())
        .map(|j| {
            let others: Vec<&[f64]> = columns.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, c)| c.as_slice()).collect();
            let tolerance = 1.0 - r_squared(&columns[j], &others);
            if tolerance <= 1e-10 {
                f64::INFINITY
            } else {
                1.0 / tolerance
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VifReport {
    pub threshold: f64,
    /// VIFs of all columns before anything was dropped.
    pub initial: Vec<f64>,
    /// Surviving column indices, ascending, with their final VIFs.
    pub kept: Vec<(usize, f64)>,
    /// Dropped column indices in drop order, with the VIF that caused it.
    pub excluded: Vec<(usize, f64)>,
}

/// Drops the column with the largest VIF until every VIF is at most
/// `threshold`. Ties go to the later column.
pub fn vif_filter(columns: &[Vec<f64>], threshold: f64) -> Result<VifReport, StatsError> {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if p < 2 || n <= p || columns.iter().any(|c| c.len() != n) {
        return Err(StatsError::BadDesign { rows: n, cols: p });
    }
    let initial = vif_values(columns);
    let mut alive: Vec<usize> = (0..p).collect();
    let mut current = initial.clone();
    let mut excluded = Vec::new();
    loop {
        let (worst, value) = current
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v >= bv { (i, *v) } else { (bi, bv) });
        if value <= threshold || alive.len() < 2 {
            break;
        }
        excluded.push((alive[worst], value));
        alive.remove(worst);
        current = if alive.len() >= 2 {
            let cols: Vec<Vec<f64>> = alive.iter().map(|i| columns[*i].clone()).collect();
            vif_values(&cols)
        } else {
            vec![1.0; alive.len()]
        };
    }
    let kept = alive.into_iter().zip(current).collect();
    Ok(VifReport { threshold, initial, kept, excluded })
}
