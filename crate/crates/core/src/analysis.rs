//! End-to-end estimation pipelines. Each one refits every model it needs, so
//! its `replicate` method can be handed to [`bootstrap_ci`] as is.
//!
//! [`bootstrap_ci`]: crate::inference::bootstrap_ci

use crate::balancing::{balancing_weights, Estimand, WeightSet};
use crate::dataset::{AggregateSummary, Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::estimators::{weighted_mean_contrast, weighted_survival_comparison, Scale, SurvivalCurve};
use crate::glm::IrlsOptions;
use crate::inference::ReplicateValue;
use crate::maic::{maic_compare, maic_weights, CompareOptions, MaicFit, MaicOptions};
use crate::propensity::{estimate_propensity, PropensityModel};
use crate::report::EffectReport;
use crate::stc::{stc_estimate, Link, StcResult};

fn finite_estimate(report: &EffectReport) -> Result<f64> {
    report.estimate.finite().ok_or(Error::ZeroDenominator)
}

/// Propensity model, balancing weights, and a weighted contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingAnalysis {
    pub covariates: Vec<String>,
    pub estimand: Estimand,
    pub scale: Scale,
    /// Required for survival outcomes.
    pub horizon: Option<f64>,
    pub irls: IrlsOptions,
}

#[derive(Debug, Clone)]
pub struct WeightingOutput {
    pub model: PropensityModel,
    pub weights: WeightSet,
    pub report: EffectReport,
    /// Weighted Kaplan-Meier curves (trial, external) for survival outcomes.
    pub curves: Option<(SurvivalCurve, SurvivalCurve)>,
}

impl WeightingAnalysis {
    pub fn new(covariates: Vec<String>, estimand: Estimand, scale: Scale) -> Self {
        Self {
            covariates,
            estimand,
            scale,
            horizon: None,
            irls: IrlsOptions::default(),
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<WeightingOutput> {
        let model = estimate_propensity(data, &self.covariates, &self.irls)?;
        let weights = balancing_weights(&model, data, &self.estimand)?;
        let (mut report, curves) = compare_with_weights(data, &weights, self.scale, self.horizon)?;
        report.provenance.covariates = self.covariates.clone();
        Ok(WeightingOutput {
            model,
            weights,
            report,
            curves,
        })
    }

    pub fn replicate(&self, data: &Dataset) -> Result<ReplicateValue> {
        let out = self.fit(data)?;
        Ok(ReplicateValue {
            estimate: finite_estimate(&out.report)?,
            model_fits: 1,
        })
    }
}

/// Weighted contrast of a dataset under given weights, dispatching on outcome kind.
pub fn compare_with_weights(
    data: &Dataset,
    weights: &WeightSet,
    scale: Scale,
    horizon: Option<f64>,
) -> Result<(EffectReport, Option<(SurvivalCurve, SurvivalCurve)>)> {
    if data.outcome_kind() == OutcomeKind::TimeToEvent {
        scale.check(OutcomeKind::TimeToEvent)?;
        let h = horizon.ok_or_else(|| Error::InvalidConfig("survival comparison needs a horizon".into()))?;
        let (report, ct, ce) = weighted_survival_comparison(data, weights, h)?;
        Ok((report, Some((ct, ce))))
    } else {
        Ok((weighted_mean_contrast(data, weights, scale)?, None))
    }
}

/// Unweighted two-group contrast.
pub fn naive_comparison(data: &Dataset, scale: Scale, horizon: Option<f64>) -> Result<EffectReport> {
    let weights = WeightSet::uniform(Estimand::ate(), &data.groups());
    Ok(compare_with_weights(data, &weights, scale, horizon)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaicAnalysis {
    pub target: AggregateSummary,
    pub covariates: Vec<String>,
    pub options: MaicOptions,
    pub scale: Scale,
    pub compare: CompareOptions,
}

impl MaicAnalysis {
    pub fn fit(&self, data: &Dataset) -> Result<(MaicFit, EffectReport)> {
        let fit = maic_weights(data, &self.target, &self.covariates, &self.options)?;
        let report = maic_compare(&fit, data, &self.target, self.scale, &self.compare)?;
        Ok((fit, report))
    }

    pub fn replicate(&self, data: &Dataset) -> Result<ReplicateValue> {
        let (_, report) = self.fit(data)?;
        Ok(ReplicateValue {
            estimate: finite_estimate(&report)?,
            model_fits: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StcAnalysis {
    pub target: AggregateSummary,
    pub covariates: Vec<String>,
    pub link: Link,
    pub scale: Scale,
}

impl StcAnalysis {
    pub fn fit(&self, data: &Dataset) -> Result<StcResult> {
        stc_estimate(data, &self.target, &self.covariates, self.link, self.scale)
    }

    pub fn replicate(&self, data: &Dataset) -> Result<ReplicateValue> {
        let result = self.fit(data)?;
        Ok(ReplicateValue {
            estimate: finite_estimate(&result.report)?,
            model_fits: 1,
        })
    }
}
