//! Effect reports and their JSON rendering.

use std::io::Write;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::balancing::Estimand;
use crate::diagnostics::{BalanceTable, ChecklistReport};
use crate::estimators::Scale;
use crate::propensity::PositivityReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Weighting,
    Maic,
    Stc,
    PowerPrior,
}

/// Point estimate of a contrast.
///
/// Ratio scales can be infinite (zero baseline) or undefined (0/0); both are
/// carried as typed values rather than IEEE specials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContrastValue {
    Finite(f64),
    PositiveInfinity,
    Undefined,
}

impl ContrastValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            ContrastValue::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ContrastValue::Finite(_))
    }
}

impl Serialize for ContrastValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ContrastValue::Finite(v) => s.serialize_f64(*v),
            ContrastValue::PositiveInfinity => s.serialize_str("+inf"),
            ContrastValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for ContrastValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ContrastValue::Finite(v)),
            Repr::Text(t) if t == "+inf" => Ok(ContrastValue::PositiveInfinity),
            Repr::Text(t) if t == "undefined" => Ok(ContrastValue::Undefined),
            Repr::Text(t) => Err(de::Error::custom(format!("unknown contrast value `{t}`"))),
        }
    }
}

/// Median survival; "not reached" when the curve never drops to 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Median {
    Reached(f64),
    NotReached,
}

impl Serialize for Median {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Median::Reached(t) => s.serialize_f64(*t),
            Median::NotReached => s.serialize_str("not reached"),
        }
    }
}

impl<'de> Deserialize<'de> for Median {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ContrastValue::deserialize(d) {
            Ok(ContrastValue::Finite(v)) => Ok(Median::Reached(v)),
            _ => Ok(Median::NotReached),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFlag {
    /// Survival evaluated past the last observed time of a curve.
    HorizonBeyondFollowUp,
    /// Ratio contrast with a zero cell; see the estimate for its typed value.
    InfiniteContrast,
    /// 0.5 added per cell before computing a ratio contrast.
    ContinuityCorrected,
    /// Aggregate external summaries were treated as fixed constants.
    AggregateTreatedAsFixed,
    /// The percentile interval does not contain the point estimate.
    PointOutsideInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub method: String,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub refits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_outcome: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_at_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_survival: Option<Median>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positivity: Option<PositivityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checklist: Option<ChecklistReport>,
}

/// Analysis choices behind a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub covariates: Vec<String>,
    pub estimand: String,
    pub scale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub method: Method,
    /// Short estimand name, e.g. "ATT".
    pub estimand: String,
    pub target_population: String,
    pub scale: Scale,
    pub estimate: ContrastValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    pub trial: GroupSummary,
    pub external: GroupSummary,
    #[serde(default)]
    pub flags: Vec<ReportFlag>,
    #[serde(default)]
    pub caveats: Vec<String>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

impl EffectReport {
    pub fn new(method: Method, estimand: &Estimand, scale: Scale, estimate: ContrastValue) -> Self {
        let mut caveats = Vec::new();
        if estimand.kind.trim().is_some() {
            caveats.push(TRIMMED_CAVEAT.to_string());
        }
        Self {
            method,
            estimand: estimand.kind.short_name().to_string(),
            target_population: estimand.target_population_label().to_string(),
            scale,
            estimate,
            ci: None,
            trial: GroupSummary::default(),
            external: GroupSummary::default(),
            flags: Vec::new(),
            caveats,
            diagnostics: Diagnostics::default(),
            provenance: Provenance {
                estimand: estimand.kind.to_string(),
                scale: scale.code().to_string(),
                trim: estimand.kind.trim(),
                ..Provenance::default()
            },
        }
    }

    pub fn flag(&mut self, flag: ReportFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    /// Attaches a bootstrap interval, flagging it if it misses the point estimate.
    pub fn set_ci(&mut self, ci: ConfidenceInterval) {
        if let Some(p) = self.estimate.finite() {
            if p < ci.lower || p > ci.upper {
                self.flag(ReportFlag::PointOutsideInterval);
            }
        }
        self.ci = Some(ci);
    }
}

pub const TRIMMED_CAVEAT: &str = "trimmed estimand: the target population is the set of subjects \
with propensity inside the trimming band and does not correspond to a pre-specified clinical population";

/// Serializes `value` as pretty JSON with every float written to 17
/// significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17Formatter::default());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[derive(Default)]
struct Float17Formatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

fn write_float17<W: ?Sized + Write>(writer: &mut W, value: f64) -> std::io::Result<()> {
    if value.is_finite() {
        write!(writer, "{value:.16e}")
    } else {
        writer.write_all(b"null")
    }
}

impl serde_json::ser::Formatter for Float17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write_float17(writer, value)
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write_float17(writer, f64::from(value))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_17_significant_digits() {
        let s = to_json_17(&vec![0.1, 2.0 / 3.0, -1e-300]).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("6.6666666666666663e-1"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 2.0 / 3.0, -1e-300]);
    }

    #[test]
    fn contrast_values_round_trip() {
        for v in [ContrastValue::Finite(0.25), ContrastValue::PositiveInfinity, ContrastValue::Undefined] {
            let s = serde_json::to_string(&v).unwrap();
            let back: ContrastValue = serde_json::from_str(&s).unwrap();
            assert_eq!(back, v);
        }
        assert_eq!(serde_json::to_string(&Median::NotReached).unwrap(), "\"not reached\"");
    }

    #[test]
    fn trimmed_report_carries_caveat() {
        let r = EffectReport::new(
            Method::Weighting,
            &Estimand::trimmed(0.1).unwrap(),
            Scale::RiskDifference,
            ContrastValue::Finite(0.0),
        );
        assert_eq!(r.target_population, "trimmed-population (non-specified)");
        assert_eq!(r.caveats, [TRIMMED_CAVEAT]);
        assert_eq!(r.provenance.trim, Some(0.1));
    }
}
