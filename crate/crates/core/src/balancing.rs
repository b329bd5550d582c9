//! Estimand-specific balancing weights from propensity scores.
//!
//! Every estimand is described by a tilting function h(e). A trial subject
//! with score e gets weight h(e)/e and an external subject gets h(e)/(1−e).
//! Weights are kept unnormalized; all estimators downstream use ratio forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Group};
use crate::error::{Error, Result};
use crate::propensity::PropensityModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimandKind {
    /// Combined population, h = 1.
    Ate,
    /// Trial population, h = e.
    Att,
    /// External population, h = 1 − e.
    Atc,
    /// Overlap population, h = e(1 − e).
    Ato,
    /// Population with a < e < 1 − a.
    Trimmed(f64),
    /// Matching population, h = min(e, 1 − e).
    Matching,
}

impl EstimandKind {
    /// Short estimand name used in reports.
    pub fn short_name(&self) -> &'static str {
        match self {
            EstimandKind::Ate => "ATE",
            EstimandKind::Att => "ATT",
            EstimandKind::Atc => "ATC",
            EstimandKind::Ato => "ATO",
            EstimandKind::Trimmed(_) => "trimmed",
            EstimandKind::Matching => "matching",
        }
    }

    pub fn target_population(&self) -> &'static str {
        match self {
            EstimandKind::Ate => "combined trial and external population",
            EstimandKind::Att => "trial (treated) population",
            EstimandKind::Atc => "external control population",
            EstimandKind::Ato => "overlap population",
            EstimandKind::Trimmed(_) => "trimmed-population (non-specified)",
            EstimandKind::Matching => "matching population",
        }
    }

    /// Trimming half-width, when this is a trimmed estimand.
    pub fn trim(&self) -> Option<f64> {
        match self {
            EstimandKind::Trimmed(a) => Some(*a),
            _ => None,
        }
    }
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimandKind::Ate => f.write_str("ate"),
            EstimandKind::Att => f.write_str("att"),
            EstimandKind::Atc => f.write_str("atc"),
            EstimandKind::Ato => f.write_str("ato"),
            EstimandKind::Trimmed(a) => write!(f, "trim:{a}"),
            EstimandKind::Matching => f.write_str("matching"),
        }
    }
}

impl FromStr for EstimandKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "ate" | "ipw" => EstimandKind::Ate,
            "att" => EstimandKind::Att,
            "atc" => EstimandKind::Atc,
            "ato" | "overlap" => EstimandKind::Ato,
            "matching" => EstimandKind::Matching,
            other => {
                let a = other
                    .strip_prefix("trim:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidEstimand(other.to_string()))?;
                EstimandKind::Trimmed(a)
            }
        };
        Estimand::new(kind).map(|e| e.kind)
    }
}

/// Validated estimand with its target-population label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EstimandRepr", into = "EstimandRepr")]
pub struct Estimand {
    pub kind: EstimandKind,
}

#[derive(Serialize, Deserialize)]
struct EstimandRepr {
    kind: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    target_population: String,
}

impl TryFrom<EstimandRepr> for Estimand {
    type Error = Error;
    fn try_from(r: EstimandRepr) -> Result<Self> {
        Estimand::new(r.kind.parse()?)
    }
}

impl From<Estimand> for EstimandRepr {
    fn from(e: Estimand) -> Self {
        EstimandRepr {
            kind: e.kind.to_string(),
            name: e.kind.short_name().to_string(),
            target_population: e.target_population_label().to_string(),
        }
    }
}

impl Estimand {
    pub fn new(kind: EstimandKind) -> Result<Self> {
        if let EstimandKind::Trimmed(a) = kind {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::InvalidEstimand(format!("trimming threshold {a} not in (0, 0.5)")));
            }
        }
        Ok(Self { kind })
    }

    pub fn ate() -> Self {
        Self { kind: EstimandKind::Ate }
    }
    pub fn att() -> Self {
        Self { kind: EstimandKind::Att }
    }
    pub fn atc() -> Self {
        Self { kind: EstimandKind::Atc }
    }
    pub fn ato() -> Self {
        Self { kind: EstimandKind::Ato }
    }
    pub fn matching() -> Self {
        Self {
            kind: EstimandKind::Matching,
        }
    }
    pub fn trimmed(a: f64) -> Result<Self> {
        Self::new(EstimandKind::Trimmed(a))
    }

    pub fn target_population_label(&self) -> &'static str {
        self.kind.target_population()
    }
}

impl FromStr for Estimand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimand::new(s.parse()?)
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// Tilting function h(e) for an estimand; `e` must lie in (0, 1).
pub fn tilting(kind: EstimandKind, e: f64) -> f64 {
    match kind {
        EstimandKind::Ate => 1.0,
        EstimandKind::Att => e,
        EstimandKind::Atc => 1.0 - e,
        EstimandKind::Ato => e * (1.0 - e),
        EstimandKind::Trimmed(a) => {
            if a < e && e < 1.0 - a {
                1.0
            } else {
                0.0
            }
        }
        EstimandKind::Matching => e.min(1.0 - e),
    }
}

/// Weight of a subject with score `e` in the given group.
pub fn subject_weight(kind: EstimandKind, group: Group, e: f64) -> f64 {
    let h = tilting(kind, e);
    match group {
        Group::Trial => h / e,
        Group::External => h / (1.0 - e),
    }
}

/// (Σw)² / Σw²; zero when every weight is zero.
pub fn effective_sample_size(weights: impl IntoIterator<Item = f64>) -> f64 {
    let (s, s2) = weights
        .into_iter()
        .fold((0.0, 0.0), |(s, s2), w| (s + w, s2 + w * w));
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub estimand: Estimand,
    /// Nonnegative weights in dataset row order.
    pub weights: Vec<f64>,
    pub ess_treated: f64,
    pub ess_control: f64,
    pub n_zero_weight: usize,
}

impl WeightSet {
    pub fn new(estimand: Estimand, weights: Vec<f64>, groups: &[Group]) -> Result<Self> {
        if weights.len() != groups.len() {
            return Err(Error::MisalignedWeights {
                weights: weights.len(),
                records: groups.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("weight {w} is not finite and nonnegative")));
        }
        let of = |g: Group| {
            effective_sample_size(weights.iter().zip(groups).filter(|(_, gi)| **gi == g).map(|(w, _)| *w))
        };
        Ok(Self {
            ess_treated: of(Group::Trial),
            ess_control: of(Group::External),
            n_zero_weight: weights.iter().filter(|w| **w == 0.0).count(),
            estimand,
            weights,
        })
    }

    /// Unit weights for an unadjusted (naive) comparison.
    pub fn uniform(estimand: Estimand, groups: &[Group]) -> Self {
        Self::new(estimand, vec![1.0; groups.len()], groups).expect("unit weights are valid")
    }

    pub fn ess(&self, group: Group) -> f64 {
        match group {
            Group::Trial => self.ess_treated,
            Group::External => self.ess_control,
        }
    }
}

pub fn balancing_weights(model: &PropensityModel, data: &Dataset, estimand: &Estimand) -> Result<WeightSet> {
    if model.scores.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: model.scores.len(),
            records: data.len(),
        });
    }
    let mut weights = Vec::with_capacity(data.len());
    for (index, (&e, rec)) in model.scores.iter().zip(data.records()).enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::DegenerateScores { index, score: e });
        }
        weights.push(subject_weight(estimand.kind, rec.group, e));
    }
    WeightSet::new(estimand.clone(), weights, &data.groups())
}

/// Hájek mean; `None` when the total weight is zero.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Splits `values` and `weights` by group.
pub(crate) fn split_by_group(
    values: &[f64],
    weights: &[f64],
    groups: &[Group],
    group: Group,
) -> (Vec<f64>, Vec<f64>) {
    values
        .iter()
        .zip(weights)
        .zip(groups)
        .filter(|(_, g)| **g == group)
        .map(|((v, w), _)| (*v, *w))
        .unzip()
}

/// Weighted group means of `values`: (trial, external).
pub fn weighted_group_means(values: &[f64], weights: &[f64], groups: &[Group]) -> Result<(f64, f64)> {
    let mean = |g: Group| {
        let (v, w) = split_by_group(values, weights, groups, g);
        weighted_mean(&v, &w).ok_or(Error::AllWeightsZero(g))
    };
    Ok((mean(Group::Trial)?, mean(Group::External)?))
}

/// Weighted mean of one covariate in each group: (trial, external).
pub fn weighted_prevalence(weights: &WeightSet, data: &Dataset, covariate: &str) -> Result<(f64, f64)> {
    let values = data.covariate_column(covariate)?;
    if weights.weights.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: weights.weights.len(),
            records: data.len(),
        });
    }
    weighted_group_means(&values, &weights.weights, &data.groups())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::IrlsOptions;
    use crate::propensity::estimate_propensity;
    use crate::toy::severity_toy;
    use proptest::prelude::*;

    fn toy_weights(estimand: Estimand) -> (Dataset, WeightSet) {
        let d = severity_toy();
        let m = estimate_propensity(&d, &["severe".to_string()], &IrlsOptions::default()).unwrap();
        let w = balancing_weights(&m, &d, &estimand).unwrap();
        (d, w)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn tilting_values() {
        assert_eq!(tilting(EstimandKind::Ate, 0.3), 1.0);
        assert!((tilting(EstimandKind::Ato, 0.3) - 0.21).abs() < 1e-15);
        assert!((tilting(EstimandKind::Matching, 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(tilting(EstimandKind::Trimmed(0.1), 0.05), 0.0);
        assert_eq!(tilting(EstimandKind::Trimmed(0.1), 0.5), 1.0);
    }

    #[test]
    fn parse_estimands() {
        assert_eq!("ATT".parse::<EstimandKind>().unwrap(), EstimandKind::Att);
        assert_eq!("trim:0.1".parse::<EstimandKind>().unwrap(), EstimandKind::Trimmed(0.1));
        assert!("trim:0.6".parse::<EstimandKind>().is_err());
        assert!("trim:0".parse::<EstimandKind>().is_err());
        assert!("foo".parse::<EstimandKind>().is_err());
        let e = Estimand::trimmed(0.05).unwrap();
        assert_eq!(e.target_population_label(), "trimmed-population (non-specified)");
        let json = serde_json::to_string(&e).unwrap();
        let back: Estimand = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn toy_ipw_weights() {
        let (d, w) = toy_weights(Estimand::ate());
        let expected = [4.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0];
        for (a, b) in w.weights.iter().zip(expected) {
            assert!(close(*a, b), "{a} vs {b}");
        }
        let (t, e) = weighted_prevalence(&w, &d, "severe").unwrap();
        assert!(close(t, 0.5) && close(e, 0.5));
    }

    #[test]
    fn toy_atc_weights() {
        let (d, w) = toy_weights(Estimand::atc());
        assert!(close(w.weights[0], 3.0));
        assert!(close(w.weights[1], 1.0 / 3.0));
        assert!(w.weights[4..].iter().all(|&x| x == 1.0));
        let (t, e) = weighted_prevalence(&w, &d, "severe").unwrap();
        assert!(close(t, 0.75) && close(e, 0.75));
    }

    #[test]
    fn toy_att_weights_and_ess() {
        let (d, w) = toy_weights(Estimand::att());
        assert!(w.weights[..4].iter().all(|&x| x == 1.0));
        assert!(close(w.weights[4], 1.0 / 3.0));
        assert!(close(w.weights[7], 3.0));
        let (t, e) = weighted_prevalence(&w, &d, "severe").unwrap();
        assert!(close(t, 0.25) && close(e, 0.25));
        assert!(close(w.ess_control, 12.0 / 7.0));
        assert!(close(w.ess_treated, 4.0));
    }

    #[test]
    fn all_zero_group_errors() {
        let d = severity_toy();
        let mut weights = vec![1.0; 8];
        weights[4..].fill(0.0);
        let ws = WeightSet::new(Estimand::ate(), weights, &d.groups()).unwrap();
        assert_eq!(ws.ess_control, 0.0);
        assert_eq!(ws.n_zero_weight, 4);
        assert!(matches!(
            weighted_prevalence(&ws, &d, "severe"),
            Err(Error::AllWeightsZero(Group::External))
        ));
    }

    #[test]
    fn negative_weights_rejected() {
        let groups = [Group::Trial, Group::External];
        assert!(WeightSet::new(Estimand::ate(), vec![1.0, -0.5], &groups).is_err());
        assert!(WeightSet::new(Estimand::ate(), vec![1.0], &groups).is_err());
    }

    proptest! {
        #[test]
        fn row_formulas(e in 1e-6f64..(1.0 - 1e-6)) {
            for kind in [EstimandKind::Ate, EstimandKind::Att, EstimandKind::Atc, EstimandKind::Ato,
                         EstimandKind::Trimmed(0.1), EstimandKind::Matching] {
                let h = tilting(kind, e);
                prop_assert_eq!(subject_weight(kind, Group::Trial, e), h / e);
                prop_assert_eq!(subject_weight(kind, Group::External, e), h / (1.0 - e));
            }
            prop_assert_eq!(subject_weight(EstimandKind::Att, Group::Trial, e), 1.0);
            prop_assert_eq!(subject_weight(EstimandKind::Atc, Group::External, e), 1.0);
            let inside = 0.1 < e && e < 0.9;
            let trim_t = subject_weight(EstimandKind::Trimmed(0.1), Group::Trial, e);
            if inside { prop_assert_eq!(trim_t, 1.0 / e) } else { prop_assert_eq!(trim_t, 0.0) }
        }

        #[test]
        fn ess_bounds(ws in prop::collection::vec(0.01f64..100.0, 1..40), c in 0.001f64..1000.0) {
            let n = ws.len() as f64;
            let ess = effective_sample_size(ws.iter().copied());
            prop_assert!(ess <= n * (1.0 + 1e-12));
            let scaled = effective_sample_size(ws.iter().map(|w| w * c));
            prop_assert!((ess - scaled).abs() < 1e-9 * n);
            if ws.iter().all(|w| *w == ws[0]) {
                prop_assert!((ess - n).abs() < 1e-12 * n);
            }
        }

        #[test]
        fn prevalence_scale_invariant(c in 1e-3f64..1e3) {
            let (d, w) = toy_weights(Estimand::ato());
            let groups = d.groups();
            let scaled: Vec<f64> = w.weights.iter().zip(&groups)
                .map(|(x, g)| if g.is_trial() { x * c } else { *x }).collect();
            let ws = WeightSet::new(Estimand::ato(), scaled, &groups).unwrap();
            let (a, b) = weighted_prevalence(&w, &d, "severe").unwrap();
            let (a2, b2) = weighted_prevalence(&ws, &d, "severe").unwrap();
            prop_assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn ess_equals_n_only_for_equal_weights() {
        assert!((effective_sample_size([2.0; 5]) - 5.0).abs() < 1e-12);
        assert!(effective_sample_size([2.0, 2.0, 2.0, 2.0, 2.1]) < 5.0 - 1e-6);
    }
}
