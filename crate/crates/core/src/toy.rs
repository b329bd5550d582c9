//! The eight-subject severity example used throughout the docs and tests.
//!
//! The trial arm has one severe case out of four, the external cohort three
//! out of four. A saturated logistic model therefore gives every severe
//! subject a score of 1/4 and every non-severe subject 3/4.

use crate::dataset::{Dataset, Group, OutcomeKind, PatientRecord};

/// Rows in order: t1 (severe), t2..t4, e1..e3 (severe), e4.
///
/// The outcome column repeats the severity indicator, which makes weighted
/// "response" rates equal weighted severity prevalences.
pub fn severity_toy() -> Dataset {
    let rows = [
        ("t1", Group::Trial, 1.0),
        ("t2", Group::Trial, 0.0),
        ("t3", Group::Trial, 0.0),
        ("t4", Group::Trial, 0.0),
        ("e1", Group::External, 1.0),
        ("e2", Group::External, 1.0),
        ("e3", Group::External, 1.0),
        ("e4", Group::External, 0.0),
    ];
    let records = rows
        .iter()
        .map(|&(id, group, severe)| PatientRecord {
            id: id.to_string(),
            group,
            covariates: vec![severe],
            outcome: Some(severe),
            time: None,
            event: None,
        })
        .collect();
    Dataset::new(vec!["severe".to_string()], records, OutcomeKind::Binary)
        .expect("toy dataset is valid")
}

/// CSV rendering of [`severity_toy`].
pub const SEVERITY_TOY_CSV: &str = "\
id,group,severe,outcome
t1,trial,1,1
t2,trial,0,0
t3,trial,0,0
t4,trial,0,0
e1,external,1,1
e2,external,1,1
e3,external,1,1
e4,external,0,0
";
