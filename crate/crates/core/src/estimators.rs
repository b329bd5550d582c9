//! Weighted effect estimation for binary, continuous and survival outcomes.
//!
//! Group summaries are Hájek (ratio) means, so multiplying a group's weights
//! by any positive constant leaves every output unchanged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::balancing::{split_by_group, weighted_mean, Estimand, WeightSet};
use crate::dataset::{Dataset, Group, OutcomeKind};
use crate::error::{Error, Result};
use crate::report::{ContrastValue, EffectReport, GroupSummary, Median, Method, ReportFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    RiskDifference,
    RiskRatio,
    OddsRatio,
    MeanDifference,
}

impl Scale {
    pub fn code(&self) -> &'static str {
        match self {
            Scale::RiskDifference => "rd",
            Scale::RiskRatio => "rr",
            Scale::OddsRatio => "or",
            Scale::MeanDifference => "md",
        }
    }

    /// Whether the scale applies to the outcome kind. Survival outcomes are
    /// contrasted as differences of survival probabilities.
    pub fn supports(&self, kind: OutcomeKind) -> bool {
        matches!(
            (self, kind),
            (Scale::RiskDifference | Scale::RiskRatio | Scale::OddsRatio, OutcomeKind::Binary)
                | (Scale::MeanDifference, OutcomeKind::Continuous)
                | (Scale::RiskDifference, OutcomeKind::TimeToEvent)
        )
    }

    pub fn check(&self, kind: OutcomeKind) -> Result<()> {
        if self.supports(kind) {
            Ok(())
        } else {
            Err(Error::ScaleIncompatibleWithOutcome {
                scale: *self,
                outcome: kind,
            })
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::RiskDifference => "risk difference",
            Scale::RiskRatio => "risk ratio",
            Scale::OddsRatio => "odds ratio",
            Scale::MeanDifference => "mean difference",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rd" | "risk_difference" => Ok(Scale::RiskDifference),
            "rr" | "risk_ratio" => Ok(Scale::RiskRatio),
            "or" | "odds_ratio" => Ok(Scale::OddsRatio),
            "md" | "mean_difference" => Ok(Scale::MeanDifference),
            other => Err(Error::InvalidConfig(format!("unknown scale `{other}`"))),
        }
    }
}

/// Trial-versus-external contrast of two group summaries.
///
/// Zero denominators on ratio scales give [`ContrastValue::PositiveInfinity`]
/// or, for 0/0, [`ContrastValue::Undefined`].
pub fn contrast(scale: Scale, kind: OutcomeKind, trial: f64, external: f64) -> Result<ContrastValue> {
    scale.check(kind)?;
    let ratio = |num: f64, den: f64| {
        if den == 0.0 {
            if num == 0.0 {
                ContrastValue::Undefined
            } else {
                ContrastValue::PositiveInfinity
            }
        } else {
            ContrastValue::Finite(num / den)
        }
    };
    Ok(match scale {
        Scale::RiskDifference | Scale::MeanDifference => ContrastValue::Finite(trial - external),
        Scale::RiskRatio => ratio(trial, external),
        Scale::OddsRatio => ratio(trial * (1.0 - external), (1.0 - trial) * external),
    })
}

/// Weighted comparison of mean outcomes between the two groups.
pub fn weighted_mean_contrast(data: &Dataset, weights: &WeightSet, scale: Scale) -> Result<EffectReport> {
    let kind = data.outcome_kind();
    scale.check(kind)?;
    if weights.weights.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: weights.weights.len(),
            records: data.len(),
        });
    }
    let y = data.outcomes()?;
    let groups = data.groups();
    let mean = |g: Group| {
        let (v, w) = split_by_group(&y, &weights.weights, &groups, g);
        weighted_mean(&v, &w).ok_or(Error::AllWeightsZero(g))
    };
    let (mt, me) = (mean(Group::Trial)?, mean(Group::External)?);
    let estimate = contrast(scale, kind, mt, me)?;
    if !estimate.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    let (nt, ne) = data.group_counts();
    let mut report = EffectReport::new(Method::Weighting, &weights.estimand, scale, estimate);
    report.trial = GroupSummary {
        n: nt,
        weighted_outcome: Some(mt),
        ess: Some(weights.ess_treated),
        ..GroupSummary::default()
    };
    report.external = GroupSummary {
        n: ne,
        weighted_outcome: Some(me),
        ess: Some(weights.ess_control),
        ..GroupSummary::default()
    };
    Ok(report)
}

/// Right-continuous step function from a weighted product-limit estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    /// Distinct times with positive weighted event count, ascending.
    pub times: Vec<f64>,
    /// Survival just after each time.
    pub survival: Vec<f64>,
    /// Weighted number at risk at each time.
    pub at_risk: Vec<f64>,
    /// Weighted number of events at each time.
    pub events: Vec<f64>,
    /// Largest observed time (event or censoring) among positively weighted subjects.
    pub last_time: f64,
}

impl SurvivalCurve {
    /// S(t), including drops at t itself.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// First time at which S(t) ≤ 0.5.
    pub fn median(&self) -> Median {
        self.times
            .iter()
            .zip(&self.survival)
            .find(|(_, &s)| s <= 0.5)
            .map_or(Median::NotReached, |(&t, _)| Median::Reached(t))
    }
}

/// Weighted Kaplan-Meier estimate; `None` when the total weight is zero.
///
/// Subjects censored at an event time are still at risk at that time.
pub fn product_limit(times: &[f64], events: &[bool], weights: &[f64]) -> Option<SurvivalCurve> {
    assert!(times.len() == events.len() && times.len() == weights.len());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut order: Vec<usize> = (0..times.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let last_time = order.last().map_or(0.0, |&i| times[i]);

    // weighted at-risk totals by suffix sums, from the latest time backwards
    let mut suffix = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = suffix[k + 1] + weights[order[k]];
    }

    let mut curve = SurvivalCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        last_time,
    };
    let mut s = 1.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        let mut d = 0.0;
        while end < order.len() && times[order[end]] == t {
            if events[order[end]] {
                d += weights[order[end]];
            }
            end += 1;
        }
        if d > 0.0 {
            let n = suffix[k];
            s *= 1.0 - d / n;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(n);
            curve.events.push(d);
        }
        k = end;
    }
    Some(curve)
}

/// Weighted Kaplan-Meier curve of one group of a survival dataset.
pub fn weighted_km(data: &Dataset, weights: &[f64], group: Group) -> Result<SurvivalCurve> {
    if weights.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: weights.len(),
            records: data.len(),
        });
    }
    let mut t = Vec::new();
    let mut e = Vec::new();
    let mut w = Vec::new();
    for (row, (rec, &wi)) in data.records().iter().zip(weights).enumerate() {
        if rec.group != group {
            continue;
        }
        match (rec.time, rec.event) {
            (Some(ti), Some(ei)) => {
                t.push(ti);
                e.push(ei);
                w.push(wi);
            }
            _ => {
                return Err(Error::InvalidRecord {
                    row,
                    reason: "survival analysis needs time and event".into(),
                })
            }
        }
    }
    product_limit(&t, &e, &w).ok_or(Error::AllWeightsZero(group))
}

/// Difference in survival probability at `horizon` (trial minus external).
pub fn survival_contrast(
    trial: &SurvivalCurve,
    external: &SurvivalCurve,
    horizon: f64,
    estimand: &Estimand,
) -> Result<EffectReport> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("horizon {horizon} must be nonnegative")));
    }
    let (st, se) = (trial.survival_at(horizon), external.survival_at(horizon));
    let mut report = EffectReport::new(
        Method::Weighting,
        estimand,
        Scale::RiskDifference,
        ContrastValue::Finite(st - se),
    );
    report.provenance.horizon = Some(horizon);
    report.trial.survival_at_horizon = Some(st);
    report.trial.median_survival = Some(trial.median());
    report.external.survival_at_horizon = Some(se);
    report.external.median_survival = Some(external.median());
    if horizon > trial.last_time || horizon > external.last_time {
        report.flag(ReportFlag::HorizonBeyondFollowUp);
    }
    Ok(report)
}

/// Weighted survival comparison of the two groups of a dataset.
pub fn weighted_survival_comparison(
    data: &Dataset,
    weights: &WeightSet,
    horizon: f64,
) -> Result<(EffectReport, SurvivalCurve, SurvivalCurve)> {
    if data.outcome_kind() != OutcomeKind::TimeToEvent {
        return Err(Error::ScaleIncompatibleWithOutcome {
            scale: Scale::RiskDifference,
            outcome: data.outcome_kind(),
        });
    }
    let ct = weighted_km(data, &weights.weights, Group::Trial)?;
    let ce = weighted_km(data, &weights.weights, Group::External)?;
    let mut report = survival_contrast(&ct, &ce, horizon, &weights.estimand)?;
    let (nt, ne) = data.group_counts();
    report.trial.n = nt;
    report.trial.ess = Some(weights.ess_treated);
    report.external.n = ne;
    report.external.ess = Some(weights.ess_control);
    Ok((report, ct, ce))
}
