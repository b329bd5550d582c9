//! Static power prior for a binary response rate.
//!
//! External controls enter the likelihood raised to a fixed power a0 ∈ [0, 1],
//! so with a Beta(α, β) initial prior the posterior stays Beta.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Group, OutcomeKind};
use crate::error::{Error, Result};
use crate::special::{beta_inc_reg, beta_pdf, beta_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// Responders out of subjects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub responders: u64,
    pub n: u64,
}

impl Counts {
    pub fn new(responders: u64, n: u64) -> Result<Self> {
        if responders > n {
            return Err(Error::ParameterOutOfRange(format!(
                "{responders} responders out of {n} subjects"
            )));
        }
        Ok(Self { responders, n })
    }

    /// Counts of one group of a binary-outcome dataset.
    pub fn from_dataset(data: &Dataset, group: Group) -> Result<Self> {
        if data.outcome_kind() != OutcomeKind::Binary {
            return Err(Error::InvalidConfig("borrowing needs a binary outcome".into()));
        }
        let (mut x, mut n) = (0, 0);
        for (i, r) in data.records().iter().enumerate() {
            if r.group == group {
                n += 1;
                let y = r.outcome.ok_or(Error::MissingOutcome { row: i })?;
                if y == 1.0 {
                    x += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::MissingGroup(group));
        }
        Ok(Self { responders: x, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPriorPosterior {
    pub a0: f64,
    pub prior: BetaPrior,
    pub trial: Counts,
    pub external: Counts,
    pub posterior_alpha: f64,
    pub posterior_beta: f64,
    /// a0 · n0, the number of external subjects effectively borrowed.
    pub effective_prior_n: f64,
}

pub fn power_prior_posterior(
    trial: Counts,
    external: Counts,
    a0: f64,
    prior: BetaPrior,
) -> Result<PowerPriorPosterior> {
    if !(0.0..=1.0).contains(&a0) {
        return Err(Error::ParameterOutOfRange(format!("a0 = {a0} must lie in [0, 1]")));
    }
    if !(prior.alpha > 0.0 && prior.alpha.is_finite() && prior.beta > 0.0 && prior.beta.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!(
            "prior Beta({}, {}) needs positive shapes",
            prior.alpha, prior.beta
        )));
    }
    Counts::new(trial.responders, trial.n)?;
    Counts::new(external.responders, external.n)?;
    let (x, n) = (trial.responders as f64, trial.n as f64);
    let (x0, n0) = (external.responders as f64, external.n as f64);
    Ok(PowerPriorPosterior {
        a0,
        prior,
        trial,
        external,
        posterior_alpha: prior.alpha + x + a0 * x0,
        posterior_beta: prior.beta + (n - x) + a0 * (n0 - x0),
        effective_prior_n: a0 * n0,
    })
}

impl PowerPriorPosterior {
    pub fn mean(&self) -> f64 {
        self.posterior_alpha / (self.posterior_alpha + self.posterior_beta)
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = (self.posterior_alpha, self.posterior_beta);
        a * b / ((a + b).powi(2) * (a + b + 1.0))
    }

    pub fn density(&self, theta: f64) -> f64 {
        beta_pdf(theta, self.posterior_alpha, self.posterior_beta)
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        beta_inc_reg(theta, self.posterior_alpha, self.posterior_beta)
    }

    /// Equal-tailed credible interval.
    pub fn credible_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::ParameterOutOfRange(format!("level {level} must lie in (0, 1)")));
        }
        let tail = (1.0 - level) / 2.0;
        Ok((
            beta_quantile(tail, self.posterior_alpha, self.posterior_beta),
            beta_quantile(1.0 - tail, self.posterior_alpha, self.posterior_beta),
        ))
    }

    pub fn summary(&self, level: f64) -> Result<PosteriorSummary> {
        let (lower, upper) = self.credible_interval(level)?;
        Ok(PosteriorSummary {
            a0: self.a0,
            posterior_alpha: self.posterior_alpha,
            posterior_beta: self.posterior_beta,
            effective_prior_n: self.effective_prior_n,
            mean: self.mean(),
            sd: self.variance().sqrt(),
            level,
            lower,
            upper,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub a0: f64,
    pub posterior_alpha: f64,
    pub posterior_beta: f64,
    pub effective_prior_n: f64,
    pub mean: f64,
    pub sd: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior summaries over a grid of discounts, for sensitivity analysis.
pub fn a0_sweep(
    trial: Counts,
    external: Counts,
    grid: &[f64],
    prior: BetaPrior,
    level: f64,
) -> Result<Vec<PosteriorSummary>> {
    grid.iter()
        .map(|&a0| power_prior_posterior(trial, external, a0, prior)?.summary(level))
        .collect()
}
