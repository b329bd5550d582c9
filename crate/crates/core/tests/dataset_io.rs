use extctrl_core::dataset::{parse_aggregate, read_dataset};
use extctrl_core::toy::{severity_toy, SEVERITY_TOY_CSV};
use extctrl_core::{CsvSchema, Dataset, Error, Group, OutcomeKind, PatientRecord};
use proptest::prelude::*;

fn record_strategy(p: usize, kind: OutcomeKind) -> impl Strategy<Value = PatientRecord> {
    (
        "[a-zA-Z0-9_]{1,8}",
        any::<bool>(),
        prop::collection::vec(-1e6f64..1e6, p),
        any::<bool>(),
        0.0f64..100.0,
        -50.0f64..50.0,
    )
        .prop_map(move |(id, trial, covariates, flag, t, y)| {
            let group = if trial { Group::Trial } else { Group::External };
            let (outcome, time, event) = match kind {
                OutcomeKind::Binary => (Some(f64::from(u8::from(flag))), None, None),
                OutcomeKind::Continuous => (Some(y), None, None),
                OutcomeKind::TimeToEvent => (None, Some(t), Some(flag)),
            };
            PatientRecord {
                id,
                group,
                covariates,
                outcome,
                time,
                event,
            }
        })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..4, 0usize..3).prop_flat_map(|(p, k)| {
        let kind = [OutcomeKind::Binary, OutcomeKind::Continuous, OutcomeKind::TimeToEvent][k];
        prop::collection::vec(record_strategy(p, kind), 1..30).prop_map(move |mut records| {
            records[0].group = Group::Trial;
            let names = (0..p).map(|j| format!("c{j}")).collect();
            Dataset::new(names, records, kind).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(d in dataset_strategy()) {
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let schema = CsvSchema::new(d.outcome_kind());
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back, d);
    }
}

#[test]
fn toy_csv_parses_to_toy_dataset() {
    let d = read_dataset(SEVERITY_TOY_CSV.as_bytes(), &CsvSchema::new(OutcomeKind::Binary)).unwrap();
    assert_eq!(d, severity_toy());
}

#[test]
fn ingestion_errors_are_typed() {
    let schema = CsvSchema::new(OutcomeKind::Binary);
    let cases: [(&str, fn(&Error) -> bool); 5] = [
        ("id,group,x\n1,trial,0\n", |e| matches!(e, Error::MissingColumn(c) if c == "outcome")),
        ("id,group,x,outcome\n1,placebo,0,1\n", |e| matches!(e, Error::UnknownGroupLabel { .. })),
        ("id,group,x,outcome\n1,trial,abc,1\n", |e| matches!(e, Error::NonNumericCovariate { .. })),
        ("id,group,x,outcome\n1,trial,NA,1\n", |e| matches!(e, Error::MissingValue { .. })),
        ("id,group,x,outcome\n1,external,0,1\n", |e| matches!(e, Error::MissingGroup(Group::Trial))),
    ];
    for (text, check) in cases {
        let err = read_dataset(text.as_bytes(), &schema).unwrap_err();
        assert!(check(&err), "{text:?} gave {err:?}");
    }
}

#[test]
fn aggregate_rejects_bad_summaries() {
    assert!(matches!(
        parse_aggregate(r#"{"n": 10, "covariates": {}, "outcome": {"kind": "binary", "responders": 11}}"#),
        Err(Error::ResponderCountExceedsN { responders: 11, n: 10 })
    ));
    assert!(matches!(
        parse_aggregate(
            r#"{"n": 10, "covariates": {"male": 1.4}, "binary_covariates": ["male"],
                "outcome": {"kind": "binary", "responders": 1}}"#
        ),
        Err(Error::ProportionOutOfRange { .. })
    ));
    assert!(matches!(
        parse_aggregate(r#"{"n": 10, "covariates": {}, "extra": 1, "outcome": {"kind": "binary", "responders": 1}}"#),
        Err(Error::SchemaViolation(_))
    ));
}
