//! Log-link generalized linear models (Poisson and Gamma) fitted by
//! iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::normal_two_sided;
use crate::numeric::{mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Poisson,
    Gamma,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Poisson => "Poisson",
            Family::Gamma => "Gamma",
        }
    }

    fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Poisson => {
                let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (t - (y - mu))
            }
            Family::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
        }
    }

    fn deviance(self, y: &[f64], mu: &[f64]) -> f64 {
        y.iter().zip(mu).map(|(y, m)| self.unit_deviance(*y, *m)).sum()
    }

    /// IRLS working weight under the log link.
    fn weight(self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu,
            Family::Gamma => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions { max_iter: 100, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmCoefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmFit {
    pub family: Family,
    pub link: &'static str,
    /// Intercept first, then one entry per predictor column.
    pub coefficients: Vec<GlmCoefficient>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub aic: f64,
    pub pseudo_r2: f64,
    /// Pearson dispersion (1 for Poisson).
    pub dispersion: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Deviance after each accepted IRLS step.
    pub deviance_history: Vec<f64>,
    pub n: usize,
    /// Non-fatal remarks, e.g. predictors that were not standardized.
    pub warnings: Vec<String>,
}

impl GlmFit {
    pub fn fitted(&self, row: &[f64]) -> f64 {
        let eta = self.coefficients[0].estimate
            + self.coefficients[1..].iter().zip(row).map(|(c, x)| c.estimate * x).sum::<f64>();
        eta.exp()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GlmError {
    #[error("response and predictors disagree in length")]
    Shape,
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("fitted values overflowed; the data may be separated")]
    Overflow,
    #[error("IRLS did not converge in {} iterations", .0.iterations)]
    NotConverged(Box<GlmFit>),
}

fn check_response(y: &[f64], family: Family) -> Result<(), GlmError> {
    if y.is_empty() {
        return Err(GlmError::InvalidResponse("empty response".into()));
    }
    match family {
        Family::Gamma if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) => {
            Err(GlmError::InvalidResponse("Gamma response must be positive".into()))
        }
        Family::Poisson if y.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
            Err(GlmError::InvalidResponse("Poisson response must be non-negative".into()))
        }
        Family::Poisson if y.iter().all(|v| *v == 0.0) => Err(GlmError::InvalidResponse("Poisson response is all zero".into())),
        _ => Ok(()),
    }
}

/// Log-likelihood based AIC. Gamma uses the shape implied by the mean
/// deviance and counts the dispersion as a parameter.
fn aic(family: Family, y: &[f64], mu: &[f64], deviance: f64, params: usize) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::Poisson => {
            let ll: f64 = y.iter().zip(mu).map(|(y, m)| y * m.ln() - m - ln_gamma(y + 1.0)).sum();
            -2.0 * ll + 2.0 * params as f64
        }
        Family::Gamma => {
            let disp = deviance / n;
            let shape = 1.0 / disp;
            let ll: f64 = y
                .iter()
                .zip(mu)
                .map(|(y, m)| {
                    let scale = m * disp;
                    (shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()
                })
                .sum();
            -2.0 * ll + 2.0 + 2.0 * params as f64
        }
    }
}

/// Fits `y ~ 1 + X` with a log link. `columns` holds one predictor per
/// entry; `names` labels them (an intercept is always added). Predictors are
/// expected to be standardized; a warning is recorded otherwise.
pub fn fit_glm(y: &[f64], columns: &[Vec<f64>], names: &[String], family: Family, opts: GlmOptions) -> Result<GlmFit, GlmError> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) || names.len() != columns.len() {
        return Err(GlmError::Shape);
    }
    check_response(y, family)?;
    let p = columns.len() + 1;
    if n <= p {
        return Err(GlmError::RankDeficient);
    }

    let mut warnings = Vec::new();
    for (name, c) in names.iter().zip(columns) {
        let (m, sd) = (mean(c), sample_sd(c));
        if m.abs() > 1e-6 || (sd - 1.0).abs() > 1e-6 {
            warnings.push(format!("predictor {name} is not standardized (mean {m:.3}, sd {sd:.3})"));
        }
    }

    let ybar = mean(y);
    let null_mu = vec![ybar; n];
    let null_deviance = family.deviance(y, &null_mu);
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { columns[c - 1][r] });

    let mut beta;
    let mut mu;
    let mut deviance;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    if p == 1 {
        // The intercept-only maximum likelihood fit is μ = ȳ exactly.
        beta = DVector::from_element(1, ybar.ln());
        mu = null_mu;
        deviance = null_deviance;
        history.push(deviance);
        converged = true;
    } else {
        mu = y.iter().map(|v| (v + ybar) / 2.0).collect::<Vec<_>>();
        let eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
        beta = DVector::zeros(p);
        deviance = family.deviance(y, &mu);
        let mut eta = DVector::from_vec(eta);
        let mut first = true;
        while iterations < opts.max_iter {
            iterations += 1;
            let w: Vec<f64> = mu.iter().map(|m| family.weight(*m)).collect();
            let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();
            let xtw = DMatrix::from_fn(p, n, |r, c| x[(c, r)] * w[c]);
            let lhs = &xtw * &x;
            let rhs = &xtw * DVector::from_vec(z);
            let Some(chol) = lhs.cholesky() else {
                return Err(GlmError::RankDeficient);
            };
            let proposal = chol.solve(&rhs);

            // Step halving keeps the deviance from increasing.
            let mut step = proposal.clone();
            let mut accepted = None;
            for _ in 0..40 {
                let eta_new = &x * &step;
                let mu_new: Vec<f64> = eta_new.iter().map(|e| e.exp()).collect();
                let dev_new = family.deviance(y, &mu_new);
                if dev_new.is_finite() && mu_new.iter().all(|m| m.is_finite() && *m > 0.0) && (first || dev_new <= deviance) {
                    accepted = Some((eta_new, mu_new, dev_new));
                    break;
                }
                step = (&beta + &step) / 2.0;
            }
            let Some((eta_new, mu_new, dev_new)) = accepted else {
                if history.is_empty() {
                    return Err(GlmError::Overflow);
                }
                // No step reduces the deviance: the current iterate is a minimum
                // to machine precision.
                converged = true;
                break;
            };
            let change = (dev_new - deviance).abs() / (dev_new.abs() + 0.1);
            beta = step;
            eta = eta_new;
            mu = mu_new;
            deviance = dev_new;
            history.push(deviance);
            if !first && change < opts.tol {
                converged = true;
                break;
            }
            first = false;
        }
    }

    let dispersion = match family {
        Family::Poisson => 1.0,
        Family::Gamma => {
            y.iter().zip(&mu).map(|(y, m)| ((y - m) / m).powi(2)).sum::<f64>() / (n - p) as f64
        }
    };
    // Observed information; for the non-canonical Gamma log link the weight
    // is y/μ rather than its expectation 1.
    let w_obs: Vec<f64> = match family {
        Family::Poisson => mu.clone(),
        Family::Gamma => y.iter().zip(&mu).map(|(y, m)| y / m).collect(),
    };
    let info = DMatrix::from_fn(p, p, |r, c| (0..n).map(|i| x[(i, r)] * x[(i, c)] * w_obs[i]).sum::<f64>());
    let cov = info.try_inverse().ok_or(GlmError::RankDeficient)? * dispersion;

    let coefficients = (0..p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = beta[j] / se;
            GlmCoefficient {
                name: if j == 0 { "(Intercept)".to_string() } else { names[j - 1].clone() },
                estimate: beta[j],
                std_error: se,
                z,
                p_value: normal_two_sided(z),
            }
        })
        .collect();
    let fit = GlmFit {
        family,
        link: "log",
        coefficients,
        deviance,
        null_deviance,
        aic: aic(family, y, &mu, deviance, p),
        pseudo_r2: if null_deviance > 0.0 { 1.0 - deviance / null_deviance } else { 0.0 },
        dispersion,
        converged,
        iterations,
        deviance_history: history,
        n,
        warnings,
    };
    if converged {
        Ok(fit)
    } else {
        Err(GlmError::NotConverged(Box::new(fit)))
    }
}
