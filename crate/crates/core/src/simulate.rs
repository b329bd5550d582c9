//! Synthetic trial-versus-external datasets with known true effects.
//!
//! Subjects are drawn from a covariate distribution and routed to the trial
//! with probability π(x) = expit(γ₀ + γᵀx) until both group sizes are filled,
//! so each group follows the covariate law conditional on its membership.
//! Trial subjects receive the treatment, external subjects do not.
//!
//! True effects are averages of the conditional effect τ(x) over the trial
//! population (ATT), the external population (ATC), and their mixture at the
//! configured sample fractions (ATE).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::balancing::EstimandKind;
use crate::dataset::{Dataset, Group, OutcomeKind, PatientRecord};
use crate::error::{Error, Result};
use crate::estimators::Scale;
use crate::glm::logistic;
use crate::inference::substream_seed;
use crate::report::EffectReport;

/// Draws used by the Monte-Carlo truth oracle.
pub const TRUTH_DRAWS: usize = 1_000_000;
const TRUTH_SEED: u64 = 0x7275_7468_5eed;
/// Above this many binary covariates the truth falls back to Monte Carlo.
const MAX_ENUMERATED_BINARY: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_trial: usize,
    pub n_external: usize,
    pub covariates: Vec<CovariateSpec>,
    pub assignment: AssignmentModel,
    pub outcome: OutcomeModel,
    /// Added to every external follow-up time (survival only).
    #[serde(default)]
    pub time_lag: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: CovariateDistribution,
    /// Used for generation but left out of the output dataset.
    #[serde(default)]
    pub hidden: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CovariateDistribution {
    Binary { p: f64 },
    Normal { mean: f64, sd: f64 },
}

/// Logistic model of trial membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Outcome model. `effect` is the treatment shift on the model's own scale
/// (log-odds, mean, or log-hazard); `interactions` add a covariate-dependent
/// part to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OutcomeModel {
    Binary {
        intercept: f64,
        coefficients: Vec<f64>,
        effect: f64,
        #[serde(default)]
        interactions: Vec<f64>,
    },
    Continuous {
        intercept: f64,
        coefficients: Vec<f64>,
        effect: f64,
        #[serde(default)]
        interactions: Vec<f64>,
        sd: f64,
    },
    Survival {
        baseline_hazard: f64,
        coefficients: Vec<f64>,
        effect: f64,
        #[serde(default)]
        interactions: Vec<f64>,
        /// Expected share of censored subjects, in [0, 1).
        censoring_rate: f64,
        /// Time at which the true survival difference is defined.
        horizon: f64,
    },
}

impl OutcomeModel {
    pub fn outcome_kind(&self) -> OutcomeKind {
        match self {
            OutcomeModel::Binary { .. } => OutcomeKind::Binary,
            OutcomeModel::Continuous { .. } => OutcomeKind::Continuous,
            OutcomeModel::Survival { .. } => OutcomeKind::TimeToEvent,
        }
    }

    /// Scale on which the truth is expressed.
    pub fn truth_scale(&self) -> Scale {
        match self {
            OutcomeModel::Continuous { .. } => Scale::MeanDifference,
            _ => Scale::RiskDifference,
        }
    }

    fn parts(&self) -> (&[f64], f64, &[f64]) {
        match self {
            OutcomeModel::Binary {
                coefficients,
                effect,
                interactions,
                ..
            }
            | OutcomeModel::Continuous {
                coefficients,
                effect,
                interactions,
                ..
            }
            | OutcomeModel::Survival {
                coefficients,
                effect,
                interactions,
                ..
            } => (coefficients, *effect, interactions),
        }
    }

    fn prognostic(&self, x: &[f64]) -> f64 {
        dot(self.parts().0, x)
    }

    fn shift(&self, x: &[f64]) -> f64 {
        let (_, effect, interactions) = self.parts();
        effect + dot(interactions, x)
    }

    /// Conditional treatment effect τ(x) on the truth scale.
    pub fn conditional_effect(&self, x: &[f64]) -> f64 {
        let (base, shift) = (self.prognostic(x), self.shift(x));
        match *self {
            OutcomeModel::Binary { intercept, .. } => logistic(intercept + base + shift) - logistic(intercept + base),
            OutcomeModel::Continuous { .. } => shift,
            OutcomeModel::Survival {
                baseline_hazard,
                horizon,
                ..
            } => {
                let h0 = baseline_hazard * base.exp() * horizon;
                (-h0 * shift.exp()).exp() - (-h0).exp()
            }
        }
    }
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    // empty coefficient lists mean "no terms"
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be finite")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trial == 0 || self.n_external == 0 {
            return Err(Error::InvalidConfig("group sizes must be positive".into()));
        }
        let k = self.covariates.len();
        let mut names = std::collections::HashSet::new();
        for c in &self.covariates {
            if c.name.is_empty() || !names.insert(c.name.as_str()) {
                return Err(Error::InvalidConfig(format!("covariate name `{}` is empty or repeated", c.name)));
            }
            match c.distribution {
                CovariateDistribution::Binary { p } => {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::InvalidConfig(format!("`{}`: p must lie in (0, 1)", c.name)));
                    }
                }
                CovariateDistribution::Normal { mean, sd } => {
                    finite(&c.name, mean)?;
                    if !(sd > 0.0 && sd.is_finite()) {
                        return Err(Error::InvalidConfig(format!("`{}`: sd must be positive", c.name)));
                    }
                }
            }
        }
        if self.assignment.coefficients.len() != k {
            return Err(Error::InvalidConfig(format!(
                "assignment model has {} coefficients for {k} covariates",
                self.assignment.coefficients.len()
            )));
        }
        finite("assignment intercept", self.assignment.intercept)?;
        for &g in &self.assignment.coefficients {
            finite("assignment coefficient", g)?;
        }
        let (coefficients, effect, interactions) = self.outcome.parts();
        if coefficients.len() != k {
            return Err(Error::InvalidConfig(format!(
                "outcome model has {} coefficients for {k} covariates",
                coefficients.len()
            )));
        }
        if !interactions.is_empty() && interactions.len() != k {
            return Err(Error::InvalidConfig(format!(
                "outcome model has {} interactions for {k} covariates",
                interactions.len()
            )));
        }
        finite("effect", effect)?;
        for &b in coefficients.iter().chain(interactions) {
            finite("outcome coefficient", b)?;
        }
        match self.outcome {
            OutcomeModel::Binary { intercept, .. } => finite("outcome intercept", intercept)?,
            OutcomeModel::Continuous { intercept, sd, .. } => {
                finite("outcome intercept", intercept)?;
                if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::InvalidConfig("outcome sd must be nonnegative".into()));
                }
            }
            OutcomeModel::Survival {
                baseline_hazard,
                censoring_rate,
                horizon,
                ..
            } => {
                if !(baseline_hazard > 0.0 && baseline_hazard.is_finite()) {
                    return Err(Error::InvalidConfig("baseline hazard must be positive".into()));
                }
                if !(0.0..1.0).contains(&censoring_rate) {
                    return Err(Error::InvalidConfig("censoring rate must lie in [0, 1)".into()));
                }
                if !(horizon > 0.0 && horizon.is_finite()) {
                    return Err(Error::InvalidConfig("horizon must be positive".into()));
                }
            }
        }
        if !(self.time_lag >= 0.0 && self.time_lag.is_finite()) {
            return Err(Error::InvalidConfig("time lag must be nonnegative".into()));
        }
        if self.time_lag > 0.0 && self.outcome.outcome_kind() != OutcomeKind::TimeToEvent {
            return Err(Error::InvalidConfig("a time lag needs a survival outcome".into()));
        }
        Ok(())
    }

    fn trial_probability(&self, x: &[f64]) -> f64 {
        logistic(self.assignment.intercept + dot(&self.assignment.coefficients, x))
    }

    fn draw_covariates<R: Rng>(&self, rng: &mut R, x: &mut [f64]) {
        for (slot, c) in x.iter_mut().zip(&self.covariates) {
            *slot = match c.distribution {
                CovariateDistribution::Binary { p } => f64::from(u8::from(rng.random_bool(p))),
                CovariateDistribution::Normal { mean, sd } => {
                    Normal::new(mean, sd).expect("validated sd").sample(rng)
                }
            };
        }
    }

    fn all_binary(&self) -> bool {
        self.covariates
            .iter()
            .all(|c| matches!(c.distribution, CovariateDistribution::Binary { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMethod {
    Enumeration,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStandardErrors {
    pub ate: f64,
    pub att: f64,
    pub atc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub scale: Scale,
    pub ate: f64,
    pub att: f64,
    pub atc: f64,
    pub method: TruthMethod,
    /// Monte-Carlo standard errors; absent for exact enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_se: Option<TruthStandardErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// One true effect, tagged with what it measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthValue {
    pub estimand: String,
    pub scale: Scale,
    pub value: f64,
}

impl TruthRecord {
    pub fn value(&self, kind: EstimandKind) -> Result<TruthValue> {
        let value = match kind {
            EstimandKind::Ate => self.ate,
            EstimandKind::Att => self.att,
            EstimandKind::Atc => self.atc,
            other => {
                return Err(Error::EstimandMismatch {
                    report: other.short_name().into(),
                    truth: "ATE, ATT or ATC".into(),
                })
            }
        };
        Ok(TruthValue {
            estimand: kind.short_name().into(),
            scale: self.scale,
            value,
        })
    }
}

/// Estimate minus truth; the two must target the same estimand and scale.
pub fn truth_gap(report: &EffectReport, truth: &TruthValue) -> Result<f64> {
    if report.estimand != truth.estimand || report.scale != truth.scale {
        return Err(Error::EstimandMismatch {
            report: format!("{} ({})", report.estimand, report.scale.code()),
            truth: format!("{} ({})", truth.estimand, truth.scale.code()),
        });
    }
    let estimate = report.estimate.finite().ok_or(Error::ZeroDenominator)?;
    Ok(estimate - truth.value)
}

/// True ATE, ATT and ATC of the scenario's population model.
pub fn truth(config: &ScenarioConfig) -> Result<TruthRecord> {
    config.validate()?;
    let k = config.covariates.len();
    let n_total = (config.n_trial + config.n_external) as f64;
    let (wt, we) = (config.n_trial as f64 / n_total, config.n_external as f64 / n_total);
    let horizon = match config.outcome {
        OutcomeModel::Survival { horizon, .. } => Some(horizon),
        _ => None,
    };
    let scale = config.outcome.truth_scale();

    if config.all_binary() && k <= MAX_ENUMERATED_BINARY {
        let (mut s1, mut s1t, mut s0, mut s0t) = (0.0, 0.0, 0.0, 0.0);
        let mut x = vec![0.0; k];
        for mask in 0u32..(1 << k) {
            let mut mass = 1.0;
            for (j, c) in config.covariates.iter().enumerate() {
                let on = mask >> j & 1 == 1;
                x[j] = f64::from(u8::from(on));
                if let CovariateDistribution::Binary { p } = c.distribution {
                    mass *= if on { p } else { 1.0 - p };
                }
            }
            let pi = config.trial_probability(&x);
            let tau = config.outcome.conditional_effect(&x);
            s1 += mass * pi;
            s1t += mass * pi * tau;
            s0 += mass * (1.0 - pi);
            s0t += mass * (1.0 - pi) * tau;
        }
        let (att, atc) = (s1t / s1, s0t / s0);
        return Ok(TruthRecord {
            scale,
            ate: wt * att + we * atc,
            att,
            atc,
            method: TruthMethod::Enumeration,
            mc_se: None,
            horizon,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(TRUTH_SEED);
    let mut x = vec![0.0; k];
    let mut pi = Vec::with_capacity(TRUTH_DRAWS);
    let mut tau = Vec::with_capacity(TRUTH_DRAWS);
    for _ in 0..TRUTH_DRAWS {
        config.draw_covariates(&mut rng, &mut x);
        pi.push(config.trial_probability(&x));
        tau.push(config.outcome.conditional_effect(&x));
    }
    let m = TRUTH_DRAWS as f64;
    let mean_pi = pi.iter().sum::<f64>() / m;
    let mean_qi = 1.0 - mean_pi;
    let att = pi.iter().zip(&tau).map(|(p, t)| p * t).sum::<f64>() / (m * mean_pi);
    let atc = pi.iter().zip(&tau).map(|(p, t)| (1.0 - p) * t).sum::<f64>() / (m * mean_qi);
    // linearized (influence-function) standard errors of the ratio estimators
    let (mut v1, mut v0, mut va) = (0.0, 0.0, 0.0);
    for (p, t) in pi.iter().zip(&tau) {
        let i1 = p * (t - att) / mean_pi;
        let i0 = (1.0 - p) * (t - atc) / mean_qi;
        v1 += i1 * i1;
        v0 += i0 * i0;
        va += (wt * i1 + we * i0).powi(2);
    }
    let se = |v: f64| (v / (m - 1.0) / m).sqrt();
    Ok(TruthRecord {
        scale,
        ate: wt * att + we * atc,
        att,
        atc,
        method: TruthMethod::MonteCarlo,
        mc_se: Some(TruthStandardErrors {
            ate: se(va),
            att: se(v1),
            atc: se(v0),
        }),
        horizon,
    })
}

/// Draws one dataset with the given seed (the config's own seed is ignored).
pub fn draw(config: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.covariates.len();
    let n_total = config.n_trial + config.n_external;
    let max_attempts = 1000 * n_total + 1_000_000;

    struct Draw {
        group: Group,
        x: Vec<f64>,
        outcome: f64,
        censor_u: f64,
    }
    let mut draws: Vec<Draw> = Vec::with_capacity(n_total);
    let (mut need_t, mut need_e) = (config.n_trial, config.n_external);
    let mut attempts = 0;
    let mut x = vec![0.0; k];
    while need_t + need_e > 0 {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InvalidConfig(
                "assignment model cannot fill the requested group sizes".into(),
            ));
        }
        config.draw_covariates(&mut rng, &mut x);
        let to_trial = rng.random::<f64>() < config.trial_probability(&x);
        let group = match (to_trial, need_t, need_e) {
            (true, 1.., _) => {
                need_t -= 1;
                Group::Trial
            }
            (false, _, 1..) => {
                need_e -= 1;
                Group::External
            }
            _ => continue,
        };
        let treated = group.is_trial();
        let lin = config.outcome.prognostic(&x) + if treated { config.outcome.shift(&x) } else { 0.0 };
        let (outcome, censor_u) = match config.outcome {
            OutcomeModel::Binary { intercept, .. } => {
                (f64::from(u8::from(rng.random::<f64>() < logistic(intercept + lin))), 0.0)
            }
            OutcomeModel::Continuous { intercept, sd, .. } => {
                let noise = if sd > 0.0 {
                    Normal::new(0.0, sd).expect("validated sd").sample(&mut rng)
                } else {
                    0.0
                };
                (intercept + lin + noise, 0.0)
            }
            OutcomeModel::Survival { baseline_hazard, .. } => {
                let rate = baseline_hazard * lin.exp();
                let t = Exp::new(rate)
                    .map_err(|_| Error::InvalidConfig("event rate overflow".into()))?
                    .sample(&mut rng);
                (t, rng.random::<f64>())
            }
        };
        draws.push(Draw {
            group,
            x: x.clone(),
            outcome,
            censor_u,
        });
    }

    let visible: Vec<usize> = (0..k).filter(|&j| !config.covariates[j].hidden).collect();
    let names = visible.iter().map(|&j| config.covariates[j].name.clone()).collect();
    let censor_max = match config.outcome {
        OutcomeModel::Survival {
            baseline_hazard,
            censoring_rate,
            ..
        } if censoring_rate > 0.0 => {
            let hazards: Vec<f64> = draws
                .iter()
                .map(|d| {
                    let lin = config.outcome.prognostic(&d.x)
                        + if d.group.is_trial() { config.outcome.shift(&d.x) } else { 0.0 };
                    baseline_hazard * lin.exp()
                })
                .collect();
            Some(calibrate_censoring(&hazards, censoring_rate))
        }
        _ => None,
    };
    let records = draws
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let covariates = visible.iter().map(|&j| d.x[j]).collect();
            let (outcome, time, event) = match config.outcome {
                OutcomeModel::Survival { .. } => {
                    let (mut time, event) = match censor_max {
                        Some(c) if d.censor_u * c < d.outcome => (d.censor_u * c, false),
                        _ => (d.outcome, true),
                    };
                    if d.group == Group::External {
                        time += config.time_lag;
                    }
                    (None, Some(time), Some(event))
                }
                _ => (Some(d.outcome), None, None),
            };
            PatientRecord {
                id: format!("s{}", i + 1),
                group: d.group,
                covariates,
                outcome,
                time,
                event,
            }
        })
        .collect();
    Dataset::new(names, records, config.outcome.outcome_kind())
}

/// Upper end c of Uniform(0, c) censoring giving the expected censored share
/// `rate` for exponential event times with the given hazards.
fn calibrate_censoring(hazards: &[f64], rate: f64) -> f64 {
    // Pr(C < T) = (1 - exp(-λc)) / (λc), decreasing in c
    let share = |c: f64| {
        hazards
            .iter()
            .map(|&l| {
                let u = l * c;
                if u < 1e-12 {
                    1.0
                } else {
                    -(-u).exp_m1() / u
                }
            })
            .sum::<f64>()
            / hazards.len() as f64
    };
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e12f64).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share(mid.exp()) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Draws a dataset with the config's seed, together with the true effects.
pub fn generate(config: &ScenarioConfig) -> Result<(Dataset, TruthRecord)> {
    Ok((draw(config, config.seed)?, truth(config)?))
}

/// Dataset of replicate `index` under the substream rule shared with the bootstrap.
pub fn draw_replicate(config: &ScenarioConfig, root: u64, index: u64) -> Result<Dataset> {
    draw(config, substream_seed(root, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancing::Estimand;
    use crate::report::{ContrastValue, Method};

    fn one_binary(effect: f64) -> ScenarioConfig {
        ScenarioConfig {
            n_trial: 50,
            n_external: 70,
            covariates: vec![CovariateSpec {
                name: "severe".into(),
                distribution: CovariateDistribution::Binary { p: 0.4 },
                hidden: false,
            }],
            assignment: AssignmentModel {
                intercept: 0.5,
                coefficients: vec![-1.0],
            },
            outcome: OutcomeModel::Binary {
                intercept: -0.3,
                coefficients: vec![1.2],
                effect,
                interactions: vec![],
            },
            time_lag: 0.0,
            seed: 9,
        }
    }

    #[test]
    fn null_effect_has_zero_truth() {
        let t = truth(&one_binary(0.0)).unwrap();
        assert_eq!((t.ate, t.att, t.atc), (0.0, 0.0, 0.0));
        assert_eq!(t.method, TruthMethod::Enumeration);
    }

    #[test]
    fn att_by_hand_over_two_cells() {
        let cfg = one_binary(0.8);
        let t = truth(&cfg).unwrap();
        let expit = |z: f64| 1.0 / (1.0 + (-z).exp());
        let pi = [expit(0.5), expit(-0.5)];
        let mass = [0.6, 0.4];
        let tau = [expit(-0.3 + 0.8) - expit(-0.3), expit(0.9 + 0.8) - expit(0.9)];
        let att = (mass[0] * pi[0] * tau[0] + mass[1] * pi[1] * tau[1]) / (mass[0] * pi[0] + mass[1] * pi[1]);
        let q = [1.0 - pi[0], 1.0 - pi[1]];
        let atc = (mass[0] * q[0] * tau[0] + mass[1] * q[1] * tau[1]) / (mass[0] * q[0] + mass[1] * q[1]);
        assert!((t.att - att).abs() < 1e-15);
        assert!((t.atc - atc).abs() < 1e-15);
        assert!((t.ate - (50.0 * att + 70.0 * atc) / 120.0).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = one_binary(0.8);
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.group_counts(), (50, 70));
        assert_ne!(draw(&cfg, 1).unwrap(), draw(&cfg, 2).unwrap());
    }

    #[test]
    fn homogeneous_continuous_effect_monte_carlo() {
        let cfg = ScenarioConfig {
            covariates: vec![CovariateSpec {
                name: "age".into(),
                distribution: CovariateDistribution::Normal { mean: 0.0, sd: 1.0 },
                hidden: false,
            }],
            outcome: OutcomeModel::Continuous {
                intercept: 1.0,
                coefficients: vec![2.0],
                effect: 0.7,
                interactions: vec![],
                sd: 1.0,
            },
            ..one_binary(0.0)
        };
        let t = truth(&cfg).unwrap();
        assert_eq!(t.method, TruthMethod::MonteCarlo);
        for v in [t.ate, t.att, t.atc] {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn effect_modification_separates_att_and_atc() {
        let mut cfg = one_binary(0.0);
        cfg.outcome = OutcomeModel::Continuous {
            intercept: 0.0,
            coefficients: vec![0.0],
            effect: 1.0,
            interactions: vec![2.0],
            sd: 1.0,
        };
        let t = truth(&cfg).unwrap();
        // severe subjects are less likely in the trial, and benefit more
        assert!(t.atc > t.att);
    }

    #[test]
    fn hidden_covariates_are_dropped() {
        let mut cfg = one_binary(0.5);
        cfg.covariates.push(CovariateSpec {
            name: "u".into(),
            distribution: CovariateDistribution::Normal { mean: 0.0, sd: 1.0 },
            hidden: true,
        });
        cfg.assignment.coefficients.push(1.0);
        if let OutcomeModel::Binary { coefficients, .. } = &mut cfg.outcome {
            coefficients.push(1.0);
        }
        let d = draw(&cfg, 3).unwrap();
        assert_eq!(d.covariate_names(), ["severe"]);
    }

    #[test]
    fn censoring_hits_target_rate() {
        let mut cfg = one_binary(0.0);
        cfg.n_trial = 2000;
        cfg.n_external = 2000;
        cfg.outcome = OutcomeModel::Survival {
            baseline_hazard: 0.1,
            coefficients: vec![0.5],
            effect: -0.4,
            interactions: vec![],
            censoring_rate: 0.3,
            horizon: 5.0,
        };
        let d = draw(&cfg, 5).unwrap();
        let censored = d.records().iter().filter(|r| r.event == Some(false)).count() as f64 / 4000.0;
        assert!((censored - 0.3).abs() < 0.03, "{censored}");
        let t = truth(&cfg).unwrap();
        assert!(t.att > 0.0 && t.horizon == Some(5.0));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = one_binary(0.0);
        cfg.assignment.coefficients.clear();
        assert!(matches!(draw(&cfg, 0), Err(Error::InvalidConfig(_))));
        let mut cfg = one_binary(0.0);
        cfg.time_lag = 1.0;
        assert!(matches!(truth(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = one_binary(0.0);
        cfg.assignment.intercept = -40.0;
        cfg.assignment.coefficients = vec![0.0];
        cfg.n_trial = 5;
        cfg.n_external = 1;
        assert!(matches!(draw(&cfg, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn gap_checks_estimand_and_scale() {
        let tv = TruthValue {
            estimand: "ATE".into(),
            scale: Scale::RiskDifference,
            value: 0.25,
        };
        let mut r = EffectReport::new(
            Method::Weighting,
            &Estimand::ate(),
            Scale::RiskDifference,
            ContrastValue::Finite(0.30),
        );
        assert!((truth_gap(&r, &tv).unwrap() - 0.05).abs() < 1e-15);
        r.estimand = "ATT".into();
        assert!(matches!(truth_gap(&r, &tv), Err(Error::EstimandMismatch { .. })));
        let rec = truth(&one_binary(0.3)).unwrap();
        assert!(rec.value(EstimandKind::Ato).is_err());
        assert_eq!(rec.value(EstimandKind::Att).unwrap().value, rec.att);
    }

    #[test]
    fn scenario_json_round_trip() {
        let cfg = one_binary(0.2);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let text = r#"{"n_trial": 10, "n_external": 10,
            "covariates": [{"name": "x", "distribution": {"type": "normal", "mean": 0, "sd": 1}}],
            "assignment": {"intercept": 0, "coefficients": [0.5]},
            "outcome": {"kind": "binary", "intercept": 0, "coefficients": [1], "effect": 0}}"#;
        let parsed: ScenarioConfig = serde_json::from_str(text).unwrap();
        assert!(parsed.validate().is_ok());
    }
}
