//! Covariate balance and comparability checks.
//!
//! Weighted variances use the frequency-weight convention: Σw(x − m)² / Σw.

use serde::{Deserialize, Serialize};

use crate::balancing::{split_by_group, weighted_mean, WeightSet};
use crate::dataset::{Dataset, Group};
use crate::error::{Error, Result};

pub const DEFAULT_SMD_THRESHOLD: f64 = 0.1;

fn weighted_moments(values: &[f64], weights: &[f64]) -> Option<(f64, f64)> {
    let m = weighted_mean(values, weights)?;
    let total: f64 = weights.iter().sum();
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - m).powi(2))
        .sum::<f64>()
        / total;
    Some((m, var))
}

/// Group means and standardized mean difference; the SMD is `None` when the
/// pooled variance is zero.
fn smd(values: &[f64], weights: &[f64], groups: &[Group]) -> Result<(f64, f64, Option<f64>)> {
    let (vt, wt) = split_by_group(values, weights, groups, Group::Trial);
    let (ve, we) = split_by_group(values, weights, groups, Group::External);
    let (mt, st) = weighted_moments(&vt, &wt).ok_or(Error::AllWeightsZero(Group::Trial))?;
    let (me, se) = weighted_moments(&ve, &we).ok_or(Error::AllWeightsZero(Group::External))?;
    let pooled = ((st + se) / 2.0).sqrt();
    let d = (pooled > 0.0).then(|| (mt - me) / pooled);
    Ok((mt, me, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub trial_mean: f64,
    pub external_mean: f64,
    pub smd_unweighted: Option<f64>,
    pub weighted_trial_mean: f64,
    pub weighted_external_mean: f64,
    pub smd_weighted: Option<f64>,
    /// SMD undefined because the pooled variance is zero.
    pub zero_pooled_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
    pub ess_trial: f64,
    pub ess_external: f64,
    pub max_abs_weighted_smd: f64,
    pub threshold: f64,
    pub imbalance: bool,
}

impl BalanceTable {
    pub fn row(&self, covariate: &str) -> Option<&BalanceRow> {
        self.rows.iter().find(|r| r.covariate == covariate)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "covariate",
            "trial_mean",
            "external_mean",
            "smd_unweighted",
            "weighted_trial_mean",
            "weighted_external_mean",
            "smd_weighted",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.16e}"));
        for r in &self.rows {
            w.write_record([
                r.covariate.clone(),
                format!("{:.16e}", r.trial_mean),
                format!("{:.16e}", r.external_mean),
                opt(r.smd_unweighted),
                format!("{:.16e}", r.weighted_trial_mean),
                format!("{:.16e}", r.weighted_external_mean),
                opt(r.smd_weighted),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unweighted and weighted SMDs for every covariate of `data`.
pub fn balance_table(data: &Dataset, weights: &WeightSet, threshold: f64) -> Result<BalanceTable> {
    if weights.weights.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: weights.weights.len(),
            records: data.len(),
        });
    }
    let groups = data.groups();
    let ones = vec![1.0; data.len()];
    let mut rows = Vec::with_capacity(data.covariate_names().len());
    for name in data.covariate_names() {
        let x = data.covariate_column(name)?;
        let (mt, me, d0) = smd(&x, &ones, &groups)?;
        let (wmt, wme, d1) = smd(&x, &weights.weights, &groups)?;
        rows.push(BalanceRow {
            covariate: name.clone(),
            trial_mean: mt,
            external_mean: me,
            smd_unweighted: d0,
            weighted_trial_mean: wmt,
            weighted_external_mean: wme,
            smd_weighted: d1,
            zero_pooled_variance: d1.is_none(),
        });
    }
    let max_abs_weighted_smd = rows
        .iter()
        .filter_map(|r| r.smd_weighted)
        .fold(0.0_f64, |m, d| m.max(d.abs()));
    Ok(BalanceTable {
        rows,
        ess_trial: weights.ess_treated,
        ess_external: weights.ess_control,
        max_abs_weighted_smd,
        threshold,
        imbalance: max_abs_weighted_smd > threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemStatus {
    Aligned,
    Misaligned,
    NonContemporaneous,
    Unknown,
}

/// Analyst-completed comparability checklist; purely declarative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparabilityChecklist {
    #[serde(default)]
    pub eligibility: Option<ItemStatus>,
    #[serde(default)]
    pub endpoint_measurement: Option<ItemStatus>,
    #[serde(default)]
    pub calendar_time: Option<ItemStatus>,
    /// Alignment of time zero (treatment decision) between groups.
    #[serde(default)]
    pub treatment_timepoint: Option<ItemStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usual_care: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_expertise: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChecklistStatus {
    Pass,
    Warn,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistReport {
    pub status: ChecklistStatus,
    pub checklist: ComparabilityChecklist,
    pub caveats: Vec<String>,
}

const CAVEAT_ELIGIBILITY: &str =
    "eligibility criteria differ between the trial and the external cohort; the populations may not be exchangeable";
const CAVEAT_ENDPOINT: &str =
    "endpoint definition or assessment schedule differs between groups; outcomes may not be measured comparably";
const CAVEAT_CALENDAR: &str = "external controls were not followed over the same calendar period as the trial; \
changes in standard of care over time can bias the comparison";
const CAVEAT_TIMEPOINT: &str = "time zero is not aligned between groups (treatment decision versus cohort entry); \
the comparison is exposed to immortal-time or time-lag bias";

/// Status is INCOMPLETE while any structured item is unanswered, WARN when
/// any answered item is not aligned, PASS otherwise.
pub fn comparability_checklist(checklist: &ComparabilityChecklist) -> ChecklistReport {
    let items = [
        ("eligibility", checklist.eligibility, CAVEAT_ELIGIBILITY),
        ("endpoint measurement", checklist.endpoint_measurement, CAVEAT_ENDPOINT),
        ("calendar time", checklist.calendar_time, CAVEAT_CALENDAR),
        ("treatment timepoint", checklist.treatment_timepoint, CAVEAT_TIMEPOINT),
    ];
    let mut caveats = Vec::new();
    let mut missing = false;
    for (label, status, caveat) in items {
        match status {
            None => missing = true,
            Some(ItemStatus::Aligned) => {}
            Some(ItemStatus::Unknown) => caveats.push(format!("{label} comparability not assessed")),
            Some(ItemStatus::Misaligned) | Some(ItemStatus::NonContemporaneous) => {
                caveats.push(caveat.to_string())
            }
        }
    }
    let status = if missing {
        ChecklistStatus::Incomplete
    } else if caveats.is_empty() {
        ChecklistStatus::Pass
    } else {
        ChecklistStatus::Warn
    };
    ChecklistReport {
        status,
        checklist: checklist.clone(),
        caveats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancing::{balancing_weights, Estimand};
    use crate::dataset::{OutcomeKind, PatientRecord};
    use crate::glm::IrlsOptions;
    use crate::propensity::estimate_propensity;
    use crate::toy::severity_toy;
    use proptest::prelude::*;

    #[test]
    fn toy_unweighted_smd() {
        let d = severity_toy();
        let w = WeightSet::uniform(Estimand::ate(), &d.groups());
        let t = balance_table(&d, &w, DEFAULT_SMD_THRESHOLD).unwrap();
        let row = t.row("severe").unwrap();
        let expected = (0.25 - 0.75) / (3.0f64 / 16.0).sqrt();
        assert!((row.smd_unweighted.unwrap() - expected).abs() < 1e-12);
        assert!((row.smd_unweighted.unwrap() + 1.1547).abs() < 1e-4);
        assert_eq!(row.smd_unweighted, row.smd_weighted);
        assert!(t.imbalance);
    }

    #[test]
    fn toy_overlap_weights_balance_exactly() {
        let d = severity_toy();
        let m = estimate_propensity(&d, &["severe".into()], &IrlsOptions::default()).unwrap();
        let w = balancing_weights(&m, &d, &Estimand::ato()).unwrap();
        let t = balance_table(&d, &w, DEFAULT_SMD_THRESHOLD).unwrap();
        assert!(t.row("severe").unwrap().smd_weighted.unwrap().abs() < 1e-6);
        assert!(!t.imbalance);
    }

    #[test]
    fn identical_distributions_and_zero_variance() {
        let records: Vec<PatientRecord> = (0..6)
            .map(|i| PatientRecord {
                id: i.to_string(),
                group: if i % 2 == 0 { Group::Trial } else { Group::External },
                covariates: vec![(i / 2) as f64, 5.0],
                outcome: Some(0.0),
                time: None,
                event: None,
            })
            .collect();
        let d = Dataset::new(vec!["x".into(), "c".into()], records, OutcomeKind::Binary).unwrap();
        let w = WeightSet::uniform(Estimand::ate(), &d.groups());
        let t = balance_table(&d, &w, 0.1).unwrap();
        assert_eq!(t.row("x").unwrap().smd_unweighted, Some(0.0));
        let c = t.row("c").unwrap();
        assert!(c.zero_pooled_variance && c.smd_weighted.is_none());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("c,5.0000000000000000e0"));
    }

    #[test]
    fn checklist_statuses() {
        let aligned = ComparabilityChecklist {
            eligibility: Some(ItemStatus::Aligned),
            endpoint_measurement: Some(ItemStatus::Aligned),
            calendar_time: Some(ItemStatus::Aligned),
            treatment_timepoint: Some(ItemStatus::Aligned),
            ..Default::default()
        };
        assert_eq!(comparability_checklist(&aligned).status, ChecklistStatus::Pass);
        let old = ComparabilityChecklist {
            calendar_time: Some(ItemStatus::NonContemporaneous),
            ..aligned.clone()
        };
        let r = comparability_checklist(&old);
        assert_eq!(r.status, ChecklistStatus::Warn);
        assert_eq!(r.caveats, [CAVEAT_CALENDAR]);
        let empty = comparability_checklist(&ComparabilityChecklist::default());
        assert_eq!(empty.status, ChecklistStatus::Incomplete);
        let json: ComparabilityChecklist =
            serde_json::from_str(r#"{"calendar_time": "non-contemporaneous"}"#).unwrap();
        assert_eq!(json.calendar_time, Some(ItemStatus::NonContemporaneous));
    }

    proptest! {
        #[test]
        fn smd_symmetry_and_affine_invariance(
            xs in prop::collection::vec(-50.0f64..50.0, 8..30),
            ws in prop::collection::vec(0.1f64..5.0, 30),
            shift in -100.0f64..100.0,
            scale in 0.01f64..100.0,
        ) {
            let n = xs.len();
            let groups: Vec<Group> = (0..n).map(|i| if i % 2 == 0 { Group::Trial } else { Group::External }).collect();
            let w = &ws[..n];
            let (_, _, d) = smd(&xs, w, &groups).unwrap();
            prop_assume!(d.is_some());
            let d = d.unwrap();
            let swapped: Vec<Group> = groups.iter().map(|g| if g.is_trial() { Group::External } else { Group::Trial }).collect();
            let (_, _, ds) = smd(&xs, w, &swapped).unwrap();
            prop_assert!((ds.unwrap() + d).abs() < 1e-12);
            let moved: Vec<f64> = xs.iter().map(|x| shift + scale * x).collect();
            let (_, _, da) = smd(&moved, w, &groups).unwrap();
            prop_assert!((da.unwrap() - d).abs() < 1e-10 * (1.0 + d.abs()));
        }
    }
}
