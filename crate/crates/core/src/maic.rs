//! Matching-adjusted indirect comparison against an aggregate-only external
//! population.
//!
//! Trial subjects get weights wᵢ = exp(zᵢᵀα) where zᵢ are their covariates
//! centred at the target means. α minimizes the convex objective Σ exp(zᵢᵀα),
//! whose stationarity condition Σ wᵢ zᵢ = 0 is exactly "weighted trial means
//! equal target means". The resulting population is the external one (ATC).

use serde::{Deserialize, Serialize};

use crate::balancing::{effective_sample_size, weighted_mean, Estimand};
use crate::dataset::{AggregateSummary, Dataset, Group};
use crate::error::{Error, Result};
use crate::estimators::{contrast, product_limit, Scale};
use crate::linalg::{lstsq, Matrix};
use crate::report::{ContrastValue, EffectReport, GroupSummary, Method, ReportFlag};

pub const MAIC_TARGET_POPULATION: &str = "external control population (ATC)";

pub const CONSTANCY_CAVEAT: &str = "unanchored comparison: assumes the absolute treatment effect is constant \
across all effect modifiers and prognostic factors, and that all of them are among the matched covariates";

pub const FIXED_AGGREGATE_CAVEAT: &str =
    "external aggregate summaries are treated as fixed; their sampling uncertainty is not reflected";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaicOptions {
    /// Max-norm tolerance on the moment residual (weighted mean minus target).
    pub tol: f64,
    pub max_iter: usize,
    /// Also match second moments; requires target standard deviations.
    pub match_variances: bool,
}

impl Default for MaicOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            match_variances: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaicFit {
    /// One coefficient per balancing column (means, then variances if matched).
    pub alpha: Vec<f64>,
    /// Weight per trial subject, in trial row order.
    pub weights: Vec<f64>,
    pub matched_covariates: Vec<String>,
    pub achieved_means: Vec<f64>,
    pub target_means: Vec<f64>,
    pub ess: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective Σ exp(zᵀα) at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Weights scaled to a maximum of one, and the moment residual Σ wᵢ zᵢ / Σ wᵢ.
fn moment_residual(z: &Matrix, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let shift = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    let residual = z.tr_mul_vec(&w).iter().map(|g| g / total).collect();
    (w, residual)
}

/// Newton step for Σ exp(zᵀα): solves (Zᵀ W Z) δ = -Zᵀ w by least squares on √W Z.
fn newton_direction(z: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let neg: Vec<f64> = sqrt_w.iter().map(|s| -s).collect();
    lstsq(&z.scale_rows(&sqrt_w), &neg).map_err(|_| Error::CollinearCovariates)
}

/// Fits MAIC weights on the trial subjects of `data`.
pub fn maic_weights(
    data: &Dataset,
    target: &AggregateSummary,
    covariates: &[String],
    opts: &MaicOptions,
) -> Result<MaicFit> {
    let trial = data.trial_only();
    let n = trial.len();
    if covariates.is_empty() {
        return Err(Error::InvalidConfig("MAIC needs at least one covariate".into()));
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut raw = Vec::new();
    let mut target_means = Vec::new();
    for name in covariates {
        let x = trial.covariate_column(name)?;
        let m = target.mean_of(name)?;
        let z: Vec<f64> = x.iter().map(|v| v - m).collect();
        check_support(name, &z)?;
        columns.push(z);
        raw.push(x);
        target_means.push(m);
    }
    if opts.match_variances {
        for (k, name) in covariates.iter().enumerate() {
            let sd = *target.covariate_sds.get(name).ok_or_else(|| {
                Error::InvalidConfig(format!("variance matching needs a target sd for `{name}`"))
            })?;
            let z: Vec<f64> = raw[k].iter().map(|v| (v - target_means[k]).powi(2) - sd * sd).collect();
            check_support(name, &z)?;
            columns.push(z);
        }
    }
    let q = columns.len();
    let mut z = Matrix::zeros(n, q);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    if n < q || !z.is_full_rank() {
        return Err(Error::CollinearCovariates);
    }

    let mut alpha = vec![0.0; q];
    let mut eta = z.mul_vec(&alpha);
    let mut log_q = log_sum_exp(&eta);
    let mut trace = vec![log_q.exp()];
    let mut iterations = 0;
    loop {
        let (w, residual) = moment_residual(&z, &eta);
        if max_abs(&residual) < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "MAIC",
                iterations,
            });
        }
        let delta = newton_direction(&z, &w)?;
        // directional derivative of log Q along δ
        let slope: f64 = residual.iter().zip(&delta).map(|(r, d)| r * d).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = alpha.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let cand_eta = z.mul_vec(&cand);
            let cand_log_q = log_sum_exp(&cand_eta);
            if cand_log_q <= log_q + 1e-4 * step * slope {
                accepted = Some((cand, cand_eta, cand_log_q));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((a, e, l)) => {
                alpha = a;
                eta = e;
                log_q = l;
                trace.push(log_q.exp());
            }
            None => {
                return Err(Error::NoConvergence {
                    solver: "MAIC",
                    iterations,
                })
            }
        }
    }
    // One more full Newton step, kept only if it shrinks the residual without
    // raising the objective; near the optimum this roughly squares the error.
    if iterations > 0 {
        let (w, residual) = moment_residual(&z, &eta);
        let delta = newton_direction(&z, &w)?;
        let cand: Vec<f64> = alpha.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let cand_eta = z.mul_vec(&cand);
        let cand_log_q = log_sum_exp(&cand_eta);
        if max_abs(&moment_residual(&z, &cand_eta).1) < max_abs(&residual) && cand_log_q <= log_q {
            alpha = cand;
            eta = cand_eta;
            trace.push(cand_log_q.exp());
        }
    }

    let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::NoConvergence {
            solver: "MAIC",
            iterations,
        });
    }
    let achieved_means = raw
        .iter()
        .map(|x| weighted_mean(x, &weights).expect("positive weights"))
        .collect();
    Ok(MaicFit {
        alpha,
        ess: effective_sample_size(weights.iter().copied()),
        weights,
        matched_covariates: covariates.to_vec(),
        achieved_means,
        target_means,
        converged: true,
        iterations,
        objective_trace: trace,
    })
}

// A positive weighting can only reach a target strictly inside the range.
fn check_support(name: &str, centered: &[f64]) -> Result<()> {
    let below = centered.iter().any(|&v| v < 0.0);
    let above = centered.iter().any(|&v| v > 0.0);
    if below && above {
        Ok(())
    } else {
        Err(Error::TargetOutsideSupport {
            covariate: name.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompareOptions {
    /// Add 0.5 per cell when a ratio contrast has a zero cell.
    pub continuity_correction: bool,
}

/// Contrasts the MAIC-weighted trial outcome with the aggregate external outcome.
pub fn maic_compare(
    fit: &MaicFit,
    data: &Dataset,
    target: &AggregateSummary,
    scale: Scale,
    opts: &CompareOptions,
) -> Result<EffectReport> {
    if !fit.converged {
        return Err(Error::UnconvergedFit);
    }
    let kind = data.outcome_kind();
    if target.outcome_kind() != kind {
        return Err(Error::InvalidConfig(format!(
            "trial outcome is {kind} but the aggregate outcome is {}",
            target.outcome_kind()
        )));
    }
    scale.check(kind)?;
    let trial = data.trial_only();
    if fit.weights.len() != trial.len() {
        return Err(Error::MisalignedWeights {
            weights: fit.weights.len(),
            records: trial.len(),
        });
    }
    let mut horizon = None;
    let trial_value = match target.outcome {
        crate::dataset::AggregateOutcome::Survival { horizon: h, .. } => {
            let times: Vec<f64> = trial.records().iter().map(|r| r.time.unwrap_or(0.0)).collect();
            let events: Vec<bool> = trial.records().iter().map(|r| r.event.unwrap_or(false)).collect();
            let curve = product_limit(&times, &events, &fit.weights).ok_or(Error::AllWeightsZero(Group::Trial))?;
            horizon = Some((h, curve.last_time));
            curve.survival_at(h)
        }
        _ => weighted_mean(&trial.outcomes()?, &fit.weights).ok_or(Error::AllWeightsZero(Group::Trial))?,
    };
    let external_value = target.outcome_value();

    let zero_cell = matches!(scale, Scale::RiskRatio | Scale::OddsRatio)
        && (trial_value == 0.0 || trial_value == 1.0 || external_value == 0.0 || external_value == 1.0);
    let mut corrected = false;
    let (tv, ev) = if zero_cell && opts.continuity_correction {
        corrected = true;
        let responders = external_value * target.n as f64;
        (
            (trial_value * fit.ess + 0.5) / (fit.ess + 1.0),
            (responders + 0.5) / (target.n as f64 + 1.0),
        )
    } else {
        (trial_value, external_value)
    };
    let estimate = contrast(scale, kind, tv, ev)?;

    let mut report = EffectReport::new(Method::Maic, &Estimand::atc(), scale, estimate);
    report.target_population = MAIC_TARGET_POPULATION.to_string();
    report.trial = GroupSummary {
        n: trial.len(),
        weighted_outcome: Some(trial_value),
        ess: Some(fit.ess),
        ..GroupSummary::default()
    };
    report.external = GroupSummary {
        n: target.n as usize,
        weighted_outcome: Some(external_value),
        ..GroupSummary::default()
    };
    if let Some((h, last)) = horizon {
        report.provenance.horizon = Some(h);
        report.trial.survival_at_horizon = Some(trial_value);
        report.external.survival_at_horizon = Some(external_value);
        if h > last {
            report.flag(ReportFlag::HorizonBeyondFollowUp);
        }
    }
    if corrected {
        report.flag(ReportFlag::ContinuityCorrected);
    }
    if !matches!(estimate, ContrastValue::Finite(_)) {
        report.flag(ReportFlag::InfiniteContrast);
    }
    report.flag(ReportFlag::AggregateTreatedAsFixed);
    report.caveats.push(CONSTANCY_CAVEAT.to_string());
    report.caveats.push(FIXED_AGGREGATE_CAVEAT.to_string());
    report.provenance.covariates = fit.matched_covariates.clone();
    Ok(report)
}
