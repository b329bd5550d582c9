//! Propensity of trial membership, e(x) = Pr(Trial | covariates).

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, GlmFit, IrlsOptions};
use crate::linalg::Matrix;

/// Share of a group outside the band above which overlap is deemed insufficient.
pub const INSUFFICIENT_OVERLAP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub glm: GlmFit,
    /// One score per subject, in dataset row order.
    pub scores: Vec<f64>,
    /// Covariates entering the model, in coefficient order (after the intercept).
    pub covariate_names: Vec<String>,
    /// Requested covariates left out because they are constant in the data.
    pub dropped_constant: Vec<String>,
}

/// Logistic propensity model of trial membership.
///
/// Covariates that take a single value across all subjects carry no
/// information and would duplicate the intercept; they are dropped and
/// listed in `dropped_constant`. Scores are never clipped.
pub fn estimate_propensity(
    data: &Dataset,
    covariates: &[String],
    opts: &IrlsOptions,
) -> Result<PropensityModel> {
    data.require_external()?;
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    let mut columns = Vec::new();
    for name in covariates {
        let col = data.covariate_column(name)?;
        if col.iter().all(|&v| v == col[0]) {
            dropped.push(name.clone());
        } else {
            used.push(name.clone());
            columns.push(col);
        }
    }
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let x = Matrix::with_intercept(data.len(), &refs);
    let y: Vec<f64> = data
        .records()
        .iter()
        .map(|r| f64::from(u8::from(r.group.is_trial())))
        .collect();
    let glm = fit_logistic(&x, &y, opts)?;
    let scores = glm.fitted(&x);
    for (index, &score) in scores.iter().enumerate() {
        if !(score > f64::EPSILON && score < 1.0 - f64::EPSILON) {
            return Err(Error::DegenerateScores { index, score });
        }
    }
    Ok(PropensityModel {
        glm,
        scores,
        covariate_names: used,
        dropped_constant: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        values.fold(None, |acc, v| match acc {
            None => Some(ScoreRange { min: v, max: v }),
            Some(r) => Some(ScoreRange {
                min: r.min.min(v),
                max: r.max.max(v),
            }),
        })
    }
}

/// Common-support summary of a fitted propensity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Band half-width `a`: subjects with score ≤ a or ≥ 1 − a are out of band.
    pub band: f64,
    pub trial_range: Option<ScoreRange>,
    pub external_range: Option<ScoreRange>,
    /// Intersection of the two group ranges; `None` when they are disjoint.
    pub overlap: Option<ScoreRange>,
    pub trial_outside: usize,
    pub external_outside: usize,
    pub trial_outside_proportion: f64,
    pub external_outside_proportion: f64,
    pub insufficient_overlap: bool,
}

pub fn positivity_report(model: &PropensityModel, data: &Dataset, a: f64) -> Result<PositivityReport> {
    if !(0.0..0.5).contains(&a) {
        return Err(Error::ParameterOutOfRange(format!("positivity band {a} not in [0, 0.5)")));
    }
    if model.scores.len() != data.len() {
        return Err(Error::MisalignedWeights {
            weights: model.scores.len(),
            records: data.len(),
        });
    }
    let in_group = |trial: bool| {
        model
            .scores
            .iter()
            .zip(data.records())
            .filter(move |(_, r)| r.group.is_trial() == trial)
            .map(|(&s, _)| s)
    };
    let trial_range = ScoreRange::of(in_group(true));
    let external_range = ScoreRange::of(in_group(false));
    let overlap = match (trial_range, external_range) {
        (Some(t), Some(e)) => {
            let lo = t.min.max(e.min);
            let hi = t.max.min(e.max);
            (lo <= hi).then_some(ScoreRange { min: lo, max: hi })
        }
        _ => None,
    };
    let outside = |s: &f64| *s <= a || *s >= 1.0 - a;
    let (n_trial, n_external) = data.group_counts();
    let trial_outside = in_group(true).filter(outside).count();
    let external_outside = in_group(false).filter(outside).count();
    let proportion = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let trial_outside_proportion = proportion(trial_outside, n_trial);
    let external_outside_proportion = proportion(external_outside, n_external);
    let insufficient_overlap = overlap.is_none()
        || trial_outside_proportion > INSUFFICIENT_OVERLAP_FRACTION
        || external_outside_proportion > INSUFFICIENT_OVERLAP_FRACTION;
    Ok(PositivityReport {
        band: a,
        trial_range,
        external_range,
        overlap,
        trial_outside,
        external_outside,
        trial_outside_proportion,
        external_outside_proportion,
        insufficient_overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Group, OutcomeKind, PatientRecord};
    use crate::glm::logistic;
    use crate::toy::severity_toy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Trial membership drawn from logit⁻¹(γ₀ + γ₁x₁ + γ₂x₂).
    fn simulated(n: usize, gamma: [f64; 3], seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| {
                let x1: f64 = rng.random_range(-2.0..2.0);
                let x2 = f64::from(rng.random_bool(0.5));
                let p = logistic(gamma[0] + gamma[1] * x1 + gamma[2] * x2);
                let group = if rng.random_bool(p) { Group::Trial } else { Group::External };
                PatientRecord {
                    id: i.to_string(),
                    group,
                    covariates: vec![x1, x2],
                    outcome: Some(0.0),
                    time: None,
                    event: None,
                }
            })
            .collect();
        Dataset::new(names(&["x1", "x2"]), records, OutcomeKind::Binary).unwrap()
    }

    #[test]
    fn toy_scores() {
        let d = severity_toy();
        let m = estimate_propensity(&d, &names(&["severe"]), &IrlsOptions::default()).unwrap();
        for (s, r) in m.scores.iter().zip(d.records()) {
            let expected = if r.covariates[0] == 1.0 { 0.25 } else { 0.75 };
            assert!((s - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_covariate_gives_trial_share() {
        let base = severity_toy();
        let records: Vec<PatientRecord> = base
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| PatientRecord {
                covariates: vec![2.0],
                group: if i < 3 { Group::Trial } else { Group::External },
                ..r.clone()
            })
            .collect();
        let d = Dataset::new(names(&["c"]), records, OutcomeKind::Binary).unwrap();
        let m = estimate_propensity(&d, &names(&["c"]), &IrlsOptions::default()).unwrap();
        assert_eq!(m.dropped_constant, ["c"]);
        assert_eq!(m.glm.coefficients.len(), 1);
        for s in &m.scores {
            assert!((s - 3.0 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_assignment_model_and_scores_match_linear_predictor() {
        let gamma = [-0.3, 0.8, 0.6];
        let d = simulated(200, gamma, 11);
        let m = estimate_propensity(&d, &names(&["x1", "x2"]), &IrlsOptions::default()).unwrap();
        for (b, g) in m.glm.coefficients.iter().zip(gamma) {
            assert!((b - g).abs() < 0.75, "{b} vs {g}");
        }
        for (s, r) in m.scores.iter().zip(d.records()) {
            let c = &m.glm.coefficients;
            let eta = c[0] + c[1] * r.covariates[0] + c[2] * r.covariates[1];
            let direct = 1.0 / (1.0 + (-eta).exp());
            assert!((s - direct).abs() < 1e-12);
        }
        let mean = m.scores.iter().sum::<f64>() / d.len() as f64;
        let share = d.group_counts().0 as f64 / d.len() as f64;
        assert!((mean - share).abs() < 1e-8);
    }

    #[test]
    fn unknown_covariate_and_missing_external() {
        let d = severity_toy();
        assert!(matches!(
            estimate_propensity(&d, &names(&["age"]), &IrlsOptions::default()),
            Err(Error::UnknownCovariate(_))
        ));
        let trial = d.trial_only();
        assert!(matches!(
            estimate_propensity(&trial, &names(&["severe"]), &IrlsOptions::default()),
            Err(Error::MissingGroup(Group::External))
        ));
    }

    #[test]
    fn toy_positivity() {
        let d = severity_toy();
        let m = estimate_propensity(&d, &names(&["severe"]), &IrlsOptions::default()).unwrap();
        let r = positivity_report(&m, &d, 0.1).unwrap();
        let overlap = r.overlap.unwrap();
        assert!((overlap.min - 0.25).abs() < 1e-10);
        assert!((overlap.max - 0.75).abs() < 1e-10);
        assert_eq!(r.trial_outside + r.external_outside, 0);
        assert!(!r.insufficient_overlap);
        let r0 = positivity_report(&m, &d, 0.0).unwrap();
        assert_eq!(r0.trial_outside_proportion, 0.0);
        assert!(positivity_report(&m, &d, 0.5).is_err());
    }

    #[test]
    fn disjoint_support_flagged() {
        let d = severity_toy();
        let mut m = estimate_propensity(&d, &names(&["severe"]), &IrlsOptions::default()).unwrap();
        m.scores = d
            .records()
            .iter()
            .map(|r| if r.group.is_trial() { 0.995 } else { 0.005 })
            .collect();
        let r = positivity_report(&m, &d, 0.05).unwrap();
        assert!(r.overlap.is_none());
        assert!(r.insufficient_overlap);
        assert_eq!(r.trial_outside_proportion, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scores_invariant_to_covariate_rescaling(seed in any::<u64>(), c in prop::sample::select(vec![-3.0, 0.5, 2.0, 10.0])) {
            let d = simulated(150, [0.1, 0.7, -0.5], seed);
            let opts = IrlsOptions::default();
            let base = estimate_propensity(&d, &names(&["x1", "x2"]), &opts);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let records: Vec<PatientRecord> = d.records().iter().map(|r| PatientRecord {
                covariates: vec![r.covariates[0] * c, r.covariates[1]],
                ..r.clone()
            }).collect();
            let scaled = Dataset::new(names(&["x1", "x2"]), records, OutcomeKind::Binary).unwrap();
            let m = estimate_propensity(&scaled, &names(&["x1", "x2"]), &opts).unwrap();
            for (a, b) in base.scores.iter().zip(&m.scores) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
