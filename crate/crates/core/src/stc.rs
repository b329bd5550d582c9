//! Simulated treatment comparison: an outcome model fitted on trial subjects,
//! evaluated at the external covariate means, contrasted with the observed
//! external outcome.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::balancing::Estimand;
use crate::dataset::{AggregateSummary, Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::estimators::{contrast, Scale};
use crate::glm::{fit_linear, fit_logistic, GlmFit, IrlsOptions};
use crate::linalg::Matrix;
use crate::maic::{CONSTANCY_CAVEAT, FIXED_AGGREGATE_CAVEAT};
use crate::report::{ContrastValue, EffectReport, GroupSummary, Method, ReportFlag};

pub const NON_COLLAPSIBILITY_WARNING: &str = "logit link: the prediction is the outcome probability of a subject \
with mean covariates, which differs from the population-average probability when covariates vary";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Logit => "logit",
        }
    }

    /// The outcome kind this link models.
    pub fn outcome_kind(self) -> OutcomeKind {
        match self {
            Link::Identity => OutcomeKind::Continuous,
            Link::Logit => OutcomeKind::Binary,
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Link::Identity),
            "logit" => Ok(Link::Logit),
            _ => Err(Error::InvalidConfig(format!("unknown link `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StcResult {
    pub outcome_model: GlmFit,
    pub covariates: Vec<String>,
    pub predicted_external_outcome: f64,
    pub observed_external_outcome: f64,
    pub scale: Scale,
    pub effect: ContrastValue,
    pub link: Link,
    pub report: EffectReport,
}

pub fn stc_estimate(
    data: &Dataset,
    target: &AggregateSummary,
    covariates: &[String],
    link: Link,
    scale: Scale,
) -> Result<StcResult> {
    let kind = data.outcome_kind();
    if kind != link.outcome_kind() {
        return Err(Error::InvalidConfig(format!(
            "{link} link needs a {} outcome, data has {kind}",
            link.outcome_kind()
        )));
    }
    if target.outcome_kind() != kind {
        return Err(Error::InvalidConfig(format!(
            "trial outcome is {kind} but the aggregate outcome is {}",
            target.outcome_kind()
        )));
    }
    scale.check(kind)?;
    let trial = data.trial_only();
    let required = covariates.len() + 2;
    if trial.len() < required {
        return Err(Error::InsufficientObservations {
            n: trial.len(),
            required,
        });
    }

    let columns = covariates
        .iter()
        .map(|c| trial.covariate_column(c))
        .collect::<Result<Vec<_>>>()?;
    let means = covariates
        .iter()
        .map(|c| target.mean_of(c))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let x = Matrix::with_intercept(trial.len(), &refs);
    let y = trial.outcomes()?;
    let model = match link {
        Link::Identity => fit_linear(&x, &y)?,
        Link::Logit => fit_logistic(&x, &y, &IrlsOptions::default())?,
    };
    let mut row = vec![1.0];
    row.extend_from_slice(&means);
    let predicted = model.predict(&row);
    let observed = target.outcome_value();
    let effect = contrast(scale, kind, predicted, observed)?;

    let mut report = EffectReport::new(Method::Stc, &Estimand::atc(), scale, effect);
    report.trial = GroupSummary {
        n: trial.len(),
        weighted_outcome: Some(predicted),
        ..GroupSummary::default()
    };
    report.external = GroupSummary {
        n: target.n as usize,
        weighted_outcome: Some(observed),
        ..GroupSummary::default()
    };
    if !effect.is_finite() {
        report.flag(ReportFlag::InfiniteContrast);
    }
    report.flag(ReportFlag::AggregateTreatedAsFixed);
    report.caveats.push(CONSTANCY_CAVEAT.to_string());
    report.caveats.push(FIXED_AGGREGATE_CAVEAT.to_string());
    if link == Link::Logit {
        report.caveats.push(NON_COLLAPSIBILITY_WARNING.to_string());
    }
    report.provenance.covariates = covariates.to_vec();
    report.provenance.link = Some(link.to_string());

    Ok(StcResult {
        outcome_model: model,
        covariates: covariates.to_vec(),
        predicted_external_outcome: predicted,
        observed_external_outcome: observed,
        scale,
        effect,
        link,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AggregateOutcome, Group, PatientRecord};
    use indexmap::IndexMap;

    fn data(kind: OutcomeKind, rows: &[(f64, f64)]) -> Dataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| PatientRecord {
                id: format!("t{i}"),
                group: Group::Trial,
                covariates: vec![x],
                outcome: Some(y),
                time: None,
                event: None,
            })
            .collect();
        Dataset::new(vec!["x".into()], records, kind).unwrap()
    }

    fn target(mean: f64, outcome: AggregateOutcome) -> AggregateSummary {
        AggregateSummary {
            n: 50,
            covariates: IndexMap::from([("x".to_string(), mean)]),
            binary_covariates: vec![],
            covariate_sds: IndexMap::new(),
            outcome,
        }
    }

    fn x() -> Vec<String> {
        vec!["x".into()]
    }

    #[test]
    fn identity_link_at_trial_mean_returns_trial_mean() {
        let rows = [(1.0, 2.0), (2.0, 3.5), (3.0, 3.9), (4.0, 6.0), (5.0, 6.1)];
        let d = data(OutcomeKind::Continuous, &rows);
        let t = target(3.0, AggregateOutcome::Continuous { mean: 4.0, sd: 1.0 });
        let r = stc_estimate(&d, &t, &x(), Link::Identity, Scale::MeanDifference).unwrap();
        let ybar = rows.iter().map(|r| r.1).sum::<f64>() / 5.0;
        assert!((r.predicted_external_outcome - ybar).abs() < 1e-12);
        assert!((r.effect.finite().unwrap() - (ybar - 4.0)).abs() < 1e-12);
        assert!(!r.report.caveats.iter().any(|c| c == NON_COLLAPSIBILITY_WARNING));
    }

    #[test]
    fn logit_link_carries_warning_and_monotone_in_target() {
        let rows: Vec<(f64, f64)> = (0..12)
            .map(|i| (i as f64, f64::from(u8::from(matches!(i, 3 | 6 | 8 | 9 | 10 | 11)))))
            .collect();
        let d = data(OutcomeKind::Binary, &rows);
        let mut last = 0.0;
        for m in [2.0, 4.0, 6.0, 8.0] {
            let t = target(m, AggregateOutcome::Binary { responders: 20 });
            let r = stc_estimate(&d, &t, &x(), Link::Logit, Scale::RiskDifference).unwrap();
            assert!(r.outcome_model.coefficients[1] > 0.0);
            assert!(r.predicted_external_outcome > last);
            last = r.predicted_external_outcome;
            assert!(r.report.caveats.iter().any(|c| c == NON_COLLAPSIBILITY_WARNING));
            assert_eq!(r.report.provenance.link.as_deref(), Some("logit"));
        }
    }

    #[test]
    fn link_and_outcome_must_pair() {
        let d = data(OutcomeKind::Binary, &[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]);
        let t = target(1.0, AggregateOutcome::Binary { responders: 20 });
        assert!(matches!(
            stc_estimate(&d, &t, &x(), Link::Identity, Scale::RiskDifference),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            stc_estimate(&d, &t, &x(), Link::Logit, Scale::MeanDifference),
            Err(Error::ScaleIncompatibleWithOutcome { .. })
        ));
        let small = data(OutcomeKind::Binary, &[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(
            stc_estimate(&small, &t, &x(), Link::Logit, Scale::RiskDifference),
            Err(Error::InsufficientObservations { n: 2, required: 3 })
        ));
    }
}
