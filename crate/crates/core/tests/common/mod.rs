#![allow(dead_code)]

use extctrl_core::{Dataset, Group, OutcomeKind, PatientRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `n` subjects with `k` standard-normal covariates, trial membership drawn
/// from a logistic model and a binary outcome depending on the first covariate.
pub fn confounded_dataset(seed: u64, n: usize, k: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gamma: Vec<f64> = (0..k).map(|j| 0.8 - 0.5 * j as f64).collect();
    let records = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
            let lin: f64 = 0.2 + x.iter().zip(&gamma).map(|(a, b)| a * b).sum::<f64>();
            let trial = rng.random::<f64>() < 1.0 / (1.0 + (-lin).exp());
            let p = 1.0 / (1.0 + (-(x[0] - 0.3)).exp());
            PatientRecord {
                id: format!("p{i}"),
                group: if trial { Group::Trial } else { Group::External },
                covariates: x,
                outcome: Some(f64::from(u8::from(rng.random::<f64>() < p))),
                time: None,
                event: None,
            }
        })
        .collect();
    let cov = (0..k).map(|j| format!("x{}", j + 1)).collect();
    Dataset::new(cov, records, OutcomeKind::Binary).unwrap()
}
