//! Individual-level and aggregate-level data model.
//!
//! Row order of a [`Dataset`] is the canonical subject order: every score or
//! weight vector produced downstream is aligned with it. Row numbers in
//! errors are zero-based indices of data rows (the header is not counted).

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Trial,
    External,
}

impl Group {
    pub fn is_trial(self) -> bool {
        self == Group::Trial
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Trial => "trial",
            Group::External => "external",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trial" => Ok(Group::Trial),
            "external" => Ok(Group::External),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous,
    #[serde(rename = "survival", alias = "time-to-event")]
    TimeToEvent,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Binary => "binary",
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::TimeToEvent => "survival",
        })
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(OutcomeKind::Binary),
            "continuous" => Ok(OutcomeKind::Continuous),
            "survival" | "time-to-event" | "tte" => Ok(OutcomeKind::TimeToEvent),
            other => Err(Error::InvalidConfig(format!("unknown outcome kind `{other}`"))),
        }
    }
}

/// One subject. Binary outcomes are coded 1 = response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub group: Group,
    pub covariates: Vec<f64>,
    pub outcome: Option<f64>,
    pub time: Option<f64>,
    pub event: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<PatientRecord>,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    /// Validates and assembles a dataset.
    pub fn new(
        covariate_names: Vec<String>,
        records: Vec<PatientRecord>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateCovariate(name.clone()));
            }
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (row, rec) in records.iter().enumerate() {
            validate_record(row, rec, covariate_names.len(), outcome_kind)?;
        }
        if !records.iter().any(|r| r.group.is_trial()) {
            return Err(Error::MissingGroup(Group::Trial));
        }
        Ok(Self {
            covariate_names,
            records,
            outcome_kind,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.records.iter().map(|r| r.group).collect()
    }

    /// (trial count, external count)
    pub fn group_counts(&self) -> (usize, usize) {
        let trial = self.records.iter().filter(|r| r.group.is_trial()).count();
        (trial, self.records.len() - trial)
    }

    /// Errors unless both groups are represented.
    pub fn require_external(&self) -> Result<()> {
        if self.group_counts().1 == 0 {
            Err(Error::MissingGroup(Group::External))
        } else {
            Ok(())
        }
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn covariate_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.covariate_index(name)?;
        Ok(self.records.iter().map(|r| r.covariates[j]).collect())
    }

    /// Outcome values in row order; errors on the first missing one.
    pub fn outcomes(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .enumerate()
            .map(|(row, r)| r.outcome.ok_or(Error::MissingOutcome { row }))
            .collect()
    }

    /// New dataset made of the given rows (repeats allowed), in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(self.covariate_names.clone(), records, self.outcome_kind)
    }

    /// The trial subjects only, in their original relative order.
    pub fn trial_only(&self) -> Self {
        let records = self
            .records
            .iter()
            .filter(|r| r.group.is_trial())
            .cloned()
            .collect();
        Self {
            covariate_names: self.covariate_names.clone(),
            records,
            outcome_kind: self.outcome_kind,
        }
    }

    /// Writes the dataset in the documented CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let survival = self.outcome_kind == OutcomeKind::TimeToEvent
            || self.records.iter().any(|r| r.time.is_some());
        let mut header = vec!["id".to_string(), "group".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.push("outcome".into());
        if survival {
            header.push("time".into());
            header.push("event".into());
        }
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![rec.id.clone(), rec.group.to_string()];
            row.extend(rec.covariates.iter().map(|v| v.to_string()));
            row.push(rec.outcome.map(|v| v.to_string()).unwrap_or_default());
            if survival {
                row.push(rec.time.map(|v| v.to_string()).unwrap_or_default());
                row.push(rec.event.map(|e| u8::from(e).to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_record(row: usize, rec: &PatientRecord, p: usize, kind: OutcomeKind) -> Result<()> {
    let invalid = |reason: String| Err(Error::InvalidRecord { row, reason });
    if rec.covariates.len() != p {
        return invalid(format!("expected {p} covariates, found {}", rec.covariates.len()));
    }
    if rec.covariates.iter().any(|v| !v.is_finite()) {
        return invalid("covariate values must be finite".into());
    }
    match kind {
        OutcomeKind::Binary => match rec.outcome {
            Some(y) if y == 0.0 || y == 1.0 => {}
            Some(y) => return invalid(format!("binary outcome must be 0 or 1, found {y}")),
            None => return Err(Error::MissingOutcome { row }),
        },
        OutcomeKind::Continuous => match rec.outcome {
            Some(y) if y.is_finite() => {}
            Some(y) => return invalid(format!("outcome must be finite, found {y}")),
            None => return Err(Error::MissingOutcome { row }),
        },
        OutcomeKind::TimeToEvent => {
            if rec.time.is_none() || rec.event.is_none() {
                return invalid("survival outcome requires both time and event".into());
            }
        }
    }
    if rec.time.is_some() != rec.event.is_some() {
        return invalid("time and event must be given together".into());
    }
    if let Some(t) = rec.time {
        if !(t >= 0.0) || !t.is_finite() {
            return invalid(format!("time must be finite and nonnegative, found {t}"));
        }
    }
    Ok(())
}

/// Column-role mapping for [`load_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub id: String,
    pub group: String,
    /// `None` selects every column that has no other role.
    pub covariates: Option<Vec<String>>,
    pub outcome: String,
    pub time: String,
    pub event: String,
    pub outcome_kind: OutcomeKind,
}

impl CsvSchema {
    pub fn new(outcome_kind: OutcomeKind) -> Self {
        Self {
            id: "id".into(),
            group: "group".into(),
            covariates: None,
            outcome: "outcome".into(),
            time: "time".into(),
            event: "event".into(),
            outcome_kind,
        }
    }

    pub fn with_covariates<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.covariates = Some(names.into_iter().map(Into::into).collect());
        self
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = find(&schema.id)?;
    let group_col = find(&schema.group)?;
    let survival = schema.outcome_kind == OutcomeKind::TimeToEvent;
    let outcome_col = if survival {
        find(&schema.outcome).ok()
    } else {
        Some(find(&schema.outcome)?)
    };
    let (time_col, event_col) = if survival {
        (Some(find(&schema.time)?), Some(find(&schema.event)?))
    } else {
        (find(&schema.time).ok(), find(&schema.event).ok())
    };

    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => {
            let roles = [&schema.id, &schema.group, &schema.outcome, &schema.time, &schema.event];
            headers
                .iter()
                .filter(|h| !roles.contains(h))
                .cloned()
                .collect()
        }
    };
    if covariate_names.is_empty() {
        return Err(Error::MissingColumn("<covariate>".into()));
    }
    let cov_cols = covariate_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let field = |col: usize| rec.get(col).unwrap_or("");
        let group_raw = field(group_col);
        let group = group_raw.parse::<Group>().map_err(|_| Error::UnknownGroupLabel {
            row,
            value: group_raw.to_string(),
        })?;
        let mut covariates = Vec::with_capacity(cov_cols.len());
        for (name, &col) in covariate_names.iter().zip(&cov_cols) {
            let raw = field(col);
            if is_missing(raw) {
                return Err(Error::MissingValue {
                    row,
                    column: name.clone(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::NonNumericCovariate {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?;
            if v.is_nan() {
                return Err(Error::MissingValue {
                    row,
                    column: name.clone(),
                });
            }
            covariates.push(v);
        }
        let outcome = match outcome_col {
            Some(col) => optional_number(row, &schema.outcome, field(col), !survival)?,
            None => None,
        };
        let time = match time_col {
            Some(col) => optional_number(row, &schema.time, field(col), survival)?,
            None => None,
        };
        let event = match event_col {
            Some(col) => match optional_number(row, &schema.event, field(col), survival)? {
                None => None,
                Some(v) if v == 0.0 => Some(false),
                Some(v) if v == 1.0 => Some(true),
                Some(v) => {
                    return Err(Error::InvalidRecord {
                        row,
                        reason: format!("event must be 0 or 1, found {v}"),
                    })
                }
            },
            None => None,
        };
        records.push(PatientRecord {
            id: field(id_col).to_string(),
            group,
            covariates,
            outcome,
            time,
            event,
        });
    }
    Dataset::new(covariate_names, records, schema.outcome_kind)
}

fn is_missing(raw: &str) -> bool {
    raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan")
}

fn optional_number(row: usize, column: &str, raw: &str, required: bool) -> Result<Option<f64>> {
    if is_missing(raw) {
        return if required {
            Err(Error::MissingValue {
                row,
                column: column.to_string(),
            })
        } else {
            Ok(None)
        };
    }
    raw.parse::<f64>().map(Some).map_err(|_| Error::InvalidRecord {
        row,
        reason: format!("column `{column}` has non-numeric value `{raw}`"),
    })
}

/// Outcome summary of a published-only external cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AggregateOutcome {
    Binary { responders: u64 },
    Continuous { mean: f64, sd: f64 },
    Survival { horizon: f64, survival: f64 },
}

impl AggregateOutcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            AggregateOutcome::Binary { .. } => OutcomeKind::Binary,
            AggregateOutcome::Continuous { .. } => OutcomeKind::Continuous,
            AggregateOutcome::Survival { .. } => OutcomeKind::TimeToEvent,
        }
    }
}

/// Published summary of the external population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAggregate", into = "RawAggregate")]
pub struct AggregateSummary {
    pub n: u64,
    pub covariates: IndexMap<String, f64>,
    /// Covariates whose value is a proportion.
    pub binary_covariates: Vec<String>,
    /// Optional standard deviations, needed only for variance matching.
    pub covariate_sds: IndexMap<String, f64>,
    pub outcome: AggregateOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAggregate {
    n: u64,
    covariates: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    binary_covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    covariate_sds: IndexMap<String, f64>,
    outcome: AggregateOutcome,
}

impl TryFrom<RawAggregate> for AggregateSummary {
    type Error = Error;
    fn try_from(raw: RawAggregate) -> Result<Self> {
        let summary = AggregateSummary {
            n: raw.n,
            covariates: raw.covariates,
            binary_covariates: raw.binary_covariates,
            covariate_sds: raw.covariate_sds,
            outcome: raw.outcome,
        };
        summary.validate()?;
        Ok(summary)
    }
}

impl From<AggregateSummary> for RawAggregate {
    fn from(s: AggregateSummary) -> Self {
        RawAggregate {
            n: s.n,
            covariates: s.covariates,
            binary_covariates: s.binary_covariates,
            covariate_sds: s.covariate_sds,
            outcome: s.outcome,
        }
    }
}

impl AggregateSummary {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::SchemaViolation("`n` must be positive".into()));
        }
        for (name, v) in &self.covariates {
            if !v.is_finite() {
                return Err(Error::SchemaViolation(format!("covariate `{name}` is not finite")));
            }
        }
        for name in &self.binary_covariates {
            let v = *self.covariates.get(name).ok_or_else(|| {
                Error::SchemaViolation(format!("binary covariate `{name}` has no value"))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ProportionOutOfRange {
                    name: name.clone(),
                    value: v,
                });
            }
        }
        for (name, sd) in &self.covariate_sds {
            if !self.covariates.contains_key(name) {
                return Err(Error::SchemaViolation(format!("sd given for unknown covariate `{name}`")));
            }
            if !(*sd >= 0.0) || !sd.is_finite() {
                return Err(Error::SchemaViolation(format!("sd of `{name}` must be nonnegative")));
            }
        }
        match self.outcome {
            AggregateOutcome::Binary { responders } => {
                if responders > self.n {
                    return Err(Error::ResponderCountExceedsN {
                        responders,
                        n: self.n,
                    });
                }
            }
            AggregateOutcome::Continuous { mean, sd } => {
                if !mean.is_finite() || !(sd >= 0.0) || !sd.is_finite() {
                    return Err(Error::SchemaViolation(
                        "continuous outcome needs a finite mean and sd >= 0".into(),
                    ));
                }
            }
            AggregateOutcome::Survival { horizon, survival } => {
                if !(horizon >= 0.0) || !horizon.is_finite() {
                    return Err(Error::SchemaViolation("survival horizon must be nonnegative".into()));
                }
                if !(0.0..=1.0).contains(&survival) {
                    return Err(Error::SchemaViolation("survival probability must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.keys().cloned().collect()
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        self.covariates.values().copied().collect()
    }

    pub fn mean_of(&self, name: &str) -> Result<f64> {
        self.covariates
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome.kind()
    }

    /// Response proportion, outcome mean, or survival probability at the horizon.
    pub fn outcome_value(&self) -> f64 {
        match self.outcome {
            AggregateOutcome::Binary { responders } => responders as f64 / self.n as f64,
            AggregateOutcome::Continuous { mean, .. } => mean,
            AggregateOutcome::Survival { survival, .. } => survival,
        }
    }
}

pub fn load_aggregate(path: impl AsRef<Path>) -> Result<AggregateSummary> {
    let text = std::fs::read_to_string(path)?;
    parse_aggregate(&text)
}

pub fn parse_aggregate(text: &str) -> Result<AggregateSummary> {
    let raw: RawAggregate =
        serde_json::from_str(text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
    AggregateSummary::try_from(raw)
}
