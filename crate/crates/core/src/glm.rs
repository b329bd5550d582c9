//! Logistic and linear regression fitted from scratch.
//!
//! Logistic fits use iteratively reweighted least squares started from the
//! zero vector. Each weighted least-squares subproblem is solved by QR, never
//! through the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, lstsq, Matrix};

/// Coefficients (logit scale) whose magnitude exceeds this during IRLS are
/// taken as evidence of complete or quasi-complete separation.
pub const SEPARATION_THRESHOLD: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// −2 log-likelihood for logistic fits, residual sum of squares for linear.
    pub deviance: f64,
    pub max_abs_coefficient: f64,
}

impl GlmFit {
    fn new(family: Family, coefficients: Vec<f64>, iterations: usize, deviance: f64) -> Self {
        let max_abs_coefficient = coefficients.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        Self {
            family,
            coefficients,
            converged: true,
            iterations,
            deviance,
            max_abs_coefficient,
        }
    }

    /// Linear predictor for a design row (including the leading 1).
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }

    /// Fitted mean for a design row: inverse link of the linear predictor.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.linear_predictor(row);
        match self.family {
            Family::Logistic => logistic(eta),
            Family::Linear => eta,
        }
    }

    pub fn fitted(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict(x.row(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    /// Convergence when the max-norm of the score vector drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Numerically stable inverse logit.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_shape(x: &Matrix, y: &[f64]) -> Result<()> {
    assert_eq!(x.nrows(), y.len(), "design and response lengths differ");
    let required = x.ncols() + 1;
    if x.nrows() < required {
        return Err(Error::InsufficientObservations {
            n: x.nrows(),
            required,
        });
    }
    if !x.is_full_rank() {
        return Err(Error::RankDeficientDesign);
    }
    Ok(())
}

fn logistic_deviance(eta: &[f64], y: &[f64]) -> f64 {
    // log(1 + exp(η)) − yη, evaluated without overflow
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            2.0 * (softplus - yi * e)
        })
        .sum()
}

fn score(x: &Matrix, y: &[f64], p: &[f64]) -> Vec<f64> {
    let resid: Vec<f64> = y.iter().zip(p).map(|(a, b)| a - b).collect();
    x.tr_mul_vec(&resid)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

struct Iterate {
    beta: Vec<f64>,
    p: Vec<f64>,
    score: Vec<f64>,
    deviance: f64,
}

impl Iterate {
    fn at(x: &Matrix, y: &[f64], beta: Vec<f64>) -> Self {
        let eta = x.mul_vec(&beta);
        let p: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let score = score(x, y, &p);
        let deviance = logistic_deviance(&eta, y);
        Self {
            beta,
            p,
            score,
            deviance,
        }
    }

    fn newton_direction(&self, x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
        let sqrt_w: Vec<f64> = self
            .p
            .iter()
            .map(|&p| (p * (1.0 - p)).max(f64::MIN_POSITIVE).sqrt())
            .collect();
        let a = x.scale_rows(&sqrt_w);
        let rhs: Vec<f64> = y
            .iter()
            .zip(&self.p)
            .zip(&sqrt_w)
            .map(|((yi, pi), s)| (yi - pi) / s)
            .collect();
        lstsq(&a, &rhs).map_err(|_| Error::RankDeficientDesign)
    }
}

/// Maximum-likelihood logistic regression by IRLS.
///
/// `x` must already contain the intercept column. `y` is coded 0/1.
pub fn fit_logistic(x: &Matrix, y: &[f64], opts: &IrlsOptions) -> Result<GlmFit> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidConfig(format!("logistic response must be 0/1, found {bad}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::ConstantResponse);
    }
    check_shape(x, y)?;

    let mut cur = Iterate::at(x, y, vec![0.0; x.ncols()]);
    let mut iterations = 0;
    loop {
        let converged = max_abs(&cur.score) < opts.tol;
        if converged || iterations >= opts.max_iter {
            if !converged {
                return Err(Error::NoConvergence {
                    solver: "IRLS",
                    iterations,
                });
            }
            // One polishing step brings the fitted probabilities to full
            // precision; kept only if it improves the score.
            if iterations < opts.max_iter {
                let delta = cur.newton_direction(x, y)?;
                let beta = cur.beta.iter().zip(&delta).map(|(b, d)| b + d).collect();
                let next = Iterate::at(x, y, beta);
                if max_abs(&next.score) < max_abs(&cur.score) {
                    cur = next;
                    iterations += 1;
                }
            }
            return Ok(GlmFit::new(Family::Logistic, cur.beta, iterations, cur.deviance));
        }

        let delta = cur.newton_direction(x, y)?;
        iterations += 1;
        let mut step = 1.0;
        let mut next;
        let mut halvings = 0;
        loop {
            let beta = cur.beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            next = Iterate::at(x, y, beta);
            if next.deviance <= cur.deviance * (1.0 + 1e-12) + 1e-12 || halvings >= 30 {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        let magnitude = max_abs(&next.beta);
        if magnitude > SEPARATION_THRESHOLD {
            return Err(Error::SeparationDetected {
                iteration: iterations,
                magnitude,
            });
        }
        // A Newton step that no longer moves any coefficient means the score
        // sits at its rounding floor.
        let stalled = delta
            .iter()
            .zip(&next.beta)
            .all(|(d, b)| (step * d).abs() <= 1e-13 * (1.0 + b.abs()));
        cur = next;
        if stalled && max_abs(&cur.score) >= opts.tol {
            return Ok(GlmFit::new(Family::Logistic, cur.beta, iterations, cur.deviance));
        }
    }
}

/// Ordinary least squares; `x` must already contain the intercept column.
pub fn fit_linear(x: &Matrix, y: &[f64]) -> Result<GlmFit> {
    check_shape(x, y)?;
    let beta = lstsq(x, y).map_err(|_| Error::RankDeficientDesign)?;
    let fitted = x.mul_vec(&beta);
    let rss = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(GlmFit::new(Family::Linear, beta, 1, rss))
}
