use extctrl_core::borrow::{a0_sweep, power_prior_posterior, BetaPrior, Counts};
use extctrl_core::dataset::AggregateOutcome;
use extctrl_core::stc::{stc_estimate, Link};
use extctrl_core::{AggregateSummary, Dataset, Group, OutcomeKind, PatientRecord, Scale};
use indexmap::IndexMap;

fn twelve_subjects() -> Dataset {
    let rows = [
        (34.0, 0.0),
        (41.0, 0.0),
        (45.0, 1.0),
        (47.0, 0.0),
        (52.0, 1.0),
        (55.0, 0.0),
        (58.0, 1.0),
        (60.0, 1.0),
        (63.0, 0.0),
        (66.0, 1.0),
        (70.0, 1.0),
        (74.0, 1.0),
    ];
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
    Dataset::new(vec!["age".into()], records, OutcomeKind::Binary).unwrap()
}

fn target(mean: f64, responders: u64) -> AggregateSummary {
    AggregateSummary {
        n: 40,
        covariates: IndexMap::from([("age".to_string(), mean)]),
        binary_covariates: vec![],
        covariate_sds: IndexMap::new(),
        outcome: AggregateOutcome::Binary { responders },
    }
}

#[test]
fn stc_plug_in_by_hand() {
    let d = twelve_subjects();
    let r = stc_estimate(&d, &target(62.5, 14), &["age".into()], Link::Logit, Scale::RiskDifference).unwrap();
    let b = &r.outcome_model.coefficients;
    // fitted coefficients solve the score equations
    let (mut s0, mut s1) = (0.0, 0.0);
    for rec in d.records() {
        let x = rec.covariates[0];
        let p = 1.0 / (1.0 + (-(b[0] + b[1] * x)).exp());
        s0 += rec.outcome.unwrap() - p;
        s1 += (rec.outcome.unwrap() - p) * x;
    }
    assert!(s0.abs() < 1e-8 && s1.abs() < 1e-6, "{s0} {s1}");
    let by_hand = 1.0 / (1.0 + (-(b[0] + b[1] * 62.5)).exp());
    assert!((r.predicted_external_outcome - by_hand).abs() < 1e-12);
    assert!((r.effect.finite().unwrap() - (by_hand - 14.0 / 40.0)).abs() < 1e-12);
    assert!(r.predicted_external_outcome > 0.0 && r.predicted_external_outcome < 1.0);
    assert_eq!(r.report.target_population, "external control population");
}

#[test]
fn stc_null_when_observed_equals_predicted() {
    let d = twelve_subjects();
    let first = stc_estimate(&d, &target(50.0, 0), &["age".into()], Link::Logit, Scale::RiskDifference).unwrap();
    // choose an aggregate whose response share is the prediction itself
    let p = first.predicted_external_outcome;
    let mut t = target(50.0, 0);
    t.n = 1_000_000_000;
    t.outcome = AggregateOutcome::Binary {
        responders: (p * 1e9).round() as u64,
    };
    let r = stc_estimate(&d, &t, &["age".into()], Link::Logit, Scale::RiskDifference).unwrap();
    assert!(r.effect.finite().unwrap().abs() < 1e-9);
}

/// Simpson's rule over (0, 1) in log space for the unnormalized posterior
/// θ^(α+x+a0·x0−1) (1−θ)^(β+n−x+a0·(n0−x0)−1).
fn quadrature_density(x: f64, n: f64, x0: f64, n0: f64, a0: f64, alpha: f64, beta: f64, theta: f64) -> f64 {
    let log_kernel = |t: f64| {
        (alpha - 1.0) * t.ln() + (beta - 1.0) * (1.0 - t).ln()
            + x * t.ln()
            + (n - x) * (1.0 - t).ln()
            + a0 * (x0 * t.ln() + (n0 - x0) * (1.0 - t).ln())
    };
    let m = 200_000;
    let h = 1.0 / m as f64;
    let peak = (1..m).map(|i| log_kernel(i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let mut integral = 0.0;
    for i in 1..m {
        let c = if i % 2 == 1 { 4.0 } else { 2.0 };
        integral += c * (log_kernel(i as f64 * h) - peak).exp();
    }
    // endpoints contribute 0 for shapes above 1
    integral *= h / 3.0;
    (log_kernel(theta) - peak).exp() / integral
}

#[test]
fn power_prior_density_matches_quadrature() {
    let (trial, external) = (Counts::new(52, 61).unwrap(), Counts::new(35, 58).unwrap());
    let p = power_prior_posterior(trial, external, 0.5, BetaPrior::default()).unwrap();
    assert_eq!(p.posterior_alpha, 1.0 + 52.0 + 0.5 * 35.0);
    assert_eq!(p.posterior_beta, 1.0 + 9.0 + 0.5 * 23.0);
    for theta in [0.55, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9] {
        let q = quadrature_density(52.0, 61.0, 35.0, 58.0, 0.5, 1.0, 1.0, theta);
        assert!((p.density(theta) - q).abs() < 1e-6, "θ={theta}: {} vs {q}", p.density(theta));
    }
}

#[test]
fn power_prior_edges_and_sweep() {
    let (trial, external) = (Counts::new(52, 61).unwrap(), Counts::new(35, 58).unwrap());
    let prior = BetaPrior { alpha: 0.5, beta: 2.0 };
    let zero = power_prior_posterior(trial, external, 0.0, prior).unwrap();
    assert_eq!((zero.posterior_alpha, zero.posterior_beta), (0.5 + 52.0, 2.0 + 9.0));
    let full = power_prior_posterior(trial, external, 1.0, prior).unwrap();
    let pooled = power_prior_posterior(Counts::new(87, 119).unwrap(), Counts::new(0, 0).unwrap(), 0.0, prior).unwrap();
    assert_eq!(
        (full.posterior_alpha, full.posterior_beta),
        (pooled.posterior_alpha, pooled.posterior_beta)
    );
    let sweep = a0_sweep(trial, external, &[0.0, 0.25, 0.5, 0.75, 1.0], prior, 0.95).unwrap();
    // external rate 0.60 is below the trial-only mean, so borrowing pulls it down
    assert!(sweep.windows(2).all(|w| w[1].mean < w[0].mean));
}
