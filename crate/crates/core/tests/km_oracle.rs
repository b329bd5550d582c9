use std::path::{Path, PathBuf};

use extctrl_core::estimators::product_limit;

struct Fixture {
    name: String,
    times: Vec<f64>,
    events: Vec<bool>,
    weights: Vec<f64>,
}

fn fixtures() -> Vec<Fixture> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/km");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let mut r = csv::Reader::from_path(&p).unwrap();
            let (mut times, mut events, mut weights) = (vec![], vec![], vec![]);
            for rec in r.records() {
                let rec = rec.unwrap();
                times.push(rec[0].parse().unwrap());
                events.push(&rec[1] == "1");
                weights.push(rec[2].parse().unwrap());
            }
            Fixture {
                name: p.file_name().unwrap().to_string_lossy().into_owned(),
                times,
                events,
                weights,
            }
        })
        .collect()
}

/// Product over distinct event times, each factor recomputed from scratch.
fn enumeration_oracle(times: &[f64], events: &[bool], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut event_times: Vec<f64> = (0..times.len())
        .filter(|&i| events[i] && weights[i] > 0.0)
        .map(|i| times[i])
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut out = Vec::new();
    for &t in &event_times {
        let mut s = 1.0;
        for &u in event_times.iter().filter(|&&u| u <= t) {
            let mut d = 0.0;
            let mut n = 0.0;
            for i in 0..times.len() {
                if times[i] >= u {
                    n += weights[i];
                }
                if times[i] == u && events[i] {
                    d += weights[i];
                }
            }
            s *= 1.0 - d / n;
        }
        out.push((t, s));
    }
    out
}

/// Textbook estimator with integer counts.
fn classical_km(times: &[f64], events: &[bool]) -> Vec<(f64, f64)> {
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    let mut out = Vec::new();
    for t in distinct {
        let n = times.iter().filter(|&&x| x >= t).count();
        let d = (0..times.len()).filter(|&i| times[i] == t && events[i]).count();
        if d > 0 {
            s *= (n - d) as f64 / n as f64;
            out.push((t, s));
        }
    }
    out
}

#[test]
fn corpus_is_small_and_nonempty() {
    let fx = fixtures();
    assert!(fx.len() >= 8);
    for f in &fx {
        assert!(f.times.len() <= 10, "{}", f.name);
    }
}

#[test]
fn weighted_curve_matches_enumeration() {
    for f in fixtures() {
        let curve = product_limit(&f.times, &f.events, &f.weights).unwrap();
        let expected = enumeration_oracle(&f.times, &f.events, &f.weights);
        assert_eq!(curve.times.len(), expected.len(), "{}", f.name);
        let dyadic = f.weights.iter().all(|w| (w * 1024.0).fract() == 0.0);
        for ((t, s), (et, es)) in curve.times.iter().zip(&curve.survival).zip(&expected) {
            assert_eq!(t, et, "{}", f.name);
            if dyadic {
                assert_eq!(s.to_bits(), es.to_bits(), "{} at {t}", f.name);
            } else {
                assert!((s - es).abs() <= 1e-12, "{} at {t}: {s} vs {es}", f.name);
            }
        }
    }
}

#[test]
fn unit_weights_give_classical_curve() {
    for f in fixtures() {
        let ones = vec![1.0; f.times.len()];
        let curve = product_limit(&f.times, &f.events, &ones).unwrap();
        let expected = classical_km(&f.times, &f.events);
        assert_eq!(curve.times.len(), expected.len(), "{}", f.name);
        for ((t, s), (et, es)) in curve.times.iter().zip(&curve.survival).zip(&expected) {
            assert_eq!(t, et);
            assert!((s - es).abs() <= 1e-12, "{} at {t}: {s} vs {es}", f.name);
        }
    }
}

#[test]
fn curves_are_monotone_probabilities() {
    for f in fixtures() {
        let curve = product_limit(&f.times, &f.events, &f.weights).unwrap();
        assert_eq!(curve.survival_at(f64::NEG_INFINITY), 1.0);
        let mut last = 1.0;
        for &s in &curve.survival {
            assert!((0.0..=last).contains(&s), "{}", f.name);
            last = s;
        }
    }
}

#[test]
fn known_values() {
    let f = fixtures().into_iter().find(|f| f.name == "basic.csv").unwrap();
    let c = product_limit(&f.times, &f.events, &f.weights).unwrap();
    // 3 of 8 die at 6, 1 of 4 at 7, 1 of 2 at 10
    assert!((c.survival_at(6.0) - 5.0 / 8.0).abs() < 1e-15);
    assert!((c.survival_at(8.0) - 15.0 / 32.0).abs() < 1e-15);
    assert!((c.survival_at(10.0) - 15.0 / 64.0).abs() < 1e-15);
}
