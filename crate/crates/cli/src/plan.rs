//! Declarative analysis plans: parsing, validation, hashing and execution.

use std::fs;
use std::path::{Path, PathBuf};

use extctrl_core::borrow::BetaPrior;
use extctrl_core::dataset::load_aggregate;
use extctrl_core::diagnostics::{comparability_checklist, ComparabilityChecklist, DEFAULT_SMD_THRESHOLD};
use extctrl_core::maic::{CompareOptions, MaicOptions};
use extctrl_core::{
    Dataset, Estimand, EstimandKind, MaicAnalysis, OutcomeKind, Resampling, StcAnalysis, WeightingAnalysis,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::commands::{
    bootstrap_config, curves_table, default_link, load_data, maic_balance_table, maic_weights_table,
    resolve_scale, run_borrow, run_maic, run_stc, run_weighting, weights_table, balance_rows, BorrowInputs,
    Context, WeightingSettings, NOT_COMPARABLE,
};
use crate::failure::{invalid, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    Weighting,
    Maic,
    Stc,
    PowerPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapPlan {
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPriorPlan {
    pub a0: f64,
    #[serde(default = "default_prior")]
    pub prior: [f64; 2],
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub assume_comparable: bool,
}

fn default_level() -> f64 {
    0.95
}

fn default_prior() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_outcome() -> OutcomeKind {
    OutcomeKind::Binary
}

fn default_band() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    DEFAULT_SMD_THRESHOLD
}

/// A pre-specified analysis. Paths are relative to the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisPlan {
    pub data: PathBuf,
    #[serde(default = "default_outcome")]
    pub outcome: OutcomeKind,
    #[serde(default)]
    pub aggregate: Option<PathBuf>,
    pub method: PlanMethod,
    /// ate, att, atc, ato, matching or trim:<a>; weighting only, defaults to ate.
    #[serde(default)]
    pub estimand: Option<String>,
    /// Trimming half-width; shorthand for the estimand `trim:<a>`.
    #[serde(default)]
    pub trim: Option<f64>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub scale: Option<String>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub link: Option<String>,
    #[serde(default)]
    pub match_variances: bool,
    #[serde(default)]
    pub continuity_correction: bool,
    #[serde(default)]
    pub power_prior: Option<PowerPriorPlan>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapPlan>,
    #[serde(default = "default_band")]
    pub positivity_band: f64,
    #[serde(default = "default_threshold")]
    pub smd_threshold: f64,
    #[serde(default)]
    pub fail_on_overlap: bool,
    #[serde(default)]
    pub checklist: Option<ComparabilityChecklist>,
}

pub fn parse_plan(text: &str) -> Result<AnalysisPlan, Failure> {
    serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
}

/// Re-serializes a value with object keys sorted at every level.
fn canonical(value: &Value) -> Value {
    match value {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), canonical(&m[k]))).collect::<Map<_, _>>())
        }
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

/// SHA-256 of the plan with defaults filled in and keys sorted, as lowercase hex.
pub fn plan_hash(plan: &AnalysisPlan) -> String {
    let value = serde_json::to_value(plan).expect("plans serialize");
    let text = serde_json::to_string(&canonical(&value)).expect("plans serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl AnalysisPlan {
    /// Estimand named by the plan; only weighting plans may choose one.
    pub fn resolved_estimand(&self) -> Result<Estimand, Failure> {
        let fixed = match self.method {
            PlanMethod::Weighting => None,
            PlanMethod::Maic | PlanMethod::Stc => Some(EstimandKind::Atc),
            PlanMethod::PowerPrior => return Err(invalid("power-prior plans do not target a weighting estimand")),
        };
        let named: Option<EstimandKind> = self.estimand.as_deref().map(str::parse).transpose()?;
        let kind = match (self.trim, named) {
            (Some(a), None) => EstimandKind::Trimmed(a),
            (Some(a), Some(EstimandKind::Trimmed(b))) if a == b => EstimandKind::Trimmed(a),
            (Some(_), Some(_)) => return Err(invalid("`trim` conflicts with `estimand`")),
            (None, Some(k)) => k,
            (None, None) => fixed.unwrap_or(EstimandKind::Ate),
        };
        if let Some(f) = fixed {
            if kind != f {
                return Err(invalid(format!(
                    "aggregate-data methods target the external population (atc), not {kind}"
                )));
            }
        }
        Ok(Estimand::new(kind)?)
    }

    /// Rejects field combinations the chosen method cannot honour.
    pub fn validate(&self) -> Result<(), Failure> {
        let method = match self.method {
            PlanMethod::Weighting => "weighting",
            PlanMethod::Maic => "maic",
            PlanMethod::Stc => "stc",
            PlanMethod::PowerPrior => "power_prior",
        };
        let reject = |cond: bool, field: &str| {
            if cond {
                Err(invalid(format!("`{field}` is not used by method {method}")))
            } else {
                Ok(())
            }
        };
        let aggregate_method = matches!(self.method, PlanMethod::Maic | PlanMethod::Stc);
        if aggregate_method && self.aggregate.is_none() {
            return Err(invalid(format!("method {method} needs an `aggregate` summary file")));
        }
        if aggregate_method && self.covariates.is_empty() {
            return Err(invalid(format!("method {method} needs an explicit `covariates` list")));
        }
        reject(self.method == PlanMethod::Weighting && self.aggregate.is_some(), "aggregate")?;
        reject(self.method != PlanMethod::Stc && self.link.is_some(), "link")?;
        reject(self.method != PlanMethod::Maic && self.match_variances, "match_variances")?;
        reject(
            self.method != PlanMethod::Maic && self.continuity_correction,
            "continuity_correction",
        )?;
        reject(self.method != PlanMethod::PowerPrior && self.power_prior.is_some(), "power_prior")?;
        reject(self.method != PlanMethod::Weighting && self.horizon.is_some(), "horizon")?;
        reject(self.method != PlanMethod::Weighting && self.fail_on_overlap, "fail_on_overlap")?;
        if self.method == PlanMethod::PowerPrior {
            reject(self.estimand.is_some() || self.trim.is_some(), "estimand")?;
            reject(!self.covariates.is_empty(), "covariates")?;
            reject(self.bootstrap.is_some(), "bootstrap")?;
            reject(self.scale.is_some(), "scale")?;
            let pp = self
                .power_prior
                .as_ref()
                .ok_or_else(|| invalid("method power_prior needs a `power_prior` block"))?;
            if !pp.assume_comparable {
                return Err(invalid(format!("{NOT_COMPARABLE} (power_prior.assume_comparable)")));
            }
            if self.outcome != OutcomeKind::Binary {
                return Err(invalid("power-prior borrowing needs a binary outcome"));
            }
        } else {
            self.resolved_estimand()?;
            resolve_scale(self.scale.as_deref(), self.outcome)?;
        }
        if self.method == PlanMethod::Weighting && self.outcome == OutcomeKind::TimeToEvent && self.horizon.is_none()
        {
            return Err(invalid("survival weighting plans need a `horizon`"));
        }
        if self.method == PlanMethod::Stc {
            match &self.link {
                Some(l) => {
                    l.parse::<extctrl_core::stc::Link>()?;
                }
                None => {
                    default_link(self.outcome)?;
                }
            }
        }
        if !(0.0..0.5).contains(&self.positivity_band) {
            return Err(invalid("`positivity_band` must lie in [0, 0.5)"));
        }
        if let Some(b) = &self.bootstrap {
            if b.replicates < 2 || !(b.level > 0.0 && b.level < 1.0) {
                return Err(invalid("`bootstrap` needs at least 2 replicates and a level in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// A plan loaded from disk with its paths resolved.
pub struct LoadedPlan {
    pub plan: AnalysisPlan,
    pub hash: String,
    pub data: PathBuf,
    pub aggregate: Option<PathBuf>,
}

pub fn load_plan(path: &Path) -> Result<LoadedPlan, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| invalid(format!("cannot read plan {}: {e}", path.display())))?;
    let plan = parse_plan(&text)?;
    plan.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> Result<PathBuf, Failure> {
        let full = base.join(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(invalid(format!("referenced file {} does not exist", full.display())))
        }
    };
    let data = resolve(&plan.data)?;
    let aggregate = plan.aggregate.as_deref().map(resolve).transpose()?;
    Ok(LoadedPlan {
        hash: plan_hash(&plan),
        plan,
        data,
        aggregate,
    })
}

fn file_digest(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(extctrl_core::Error::from)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub const STEPS: [&str; 3] = ["estimand", "diagnostics", "comparison"];

/// Executes a plan: estimand, then diagnostics, then the comparison.
pub fn run(loaded: &LoadedPlan, ctx: &mut Context) -> Result<(), Failure> {
    let plan = &loaded.plan;
    ctx.outputs.plan_hash = Some(loaded.hash.clone());
    let data = load_data(&loaded.data, plan.outcome, &plan.covariates)?;
    let mut inputs = Map::new();
    inputs.insert("data".into(), Value::String(file_digest(&loaded.data)?));
    if let Some(a) = &loaded.aggregate {
        inputs.insert("aggregate".into(), Value::String(file_digest(a)?));
    }
    let seed = plan
        .bootstrap
        .as_ref()
        .and_then(|b| b.seed)
        .or(ctx.seed)
        .unwrap_or(0);
    let checklist = plan.checklist.as_ref().map(comparability_checklist);

    let (estimand, diagnostics, result) = match plan.method {
        PlanMethod::Weighting => run_weighting_plan(plan, &data, seed, checklist, ctx)?,
        PlanMethod::Maic | PlanMethod::Stc => {
            run_aggregate_plan(plan, &data, loaded.aggregate.as_deref(), seed, checklist, ctx)?
        }
        PlanMethod::PowerPrior => {
            let pp = plan.power_prior.as_ref().expect("validated");
            let aggregate = loaded.aggregate.as_deref().map(load_aggregate).transpose()?;
            let result = run_borrow(&BorrowInputs {
                data: &data,
                aggregate: aggregate.as_ref(),
                a0: pp.a0,
                prior: BetaPrior {
                    alpha: pp.prior[0],
                    beta: pp.prior[1],
                },
                level: pp.level,
                sweep: &pp.sweep,
            })?;
            let estimand = json!({
                "kind": "response_probability",
                "target_population": "trial population, borrowing discounted external controls",
            });
            (estimand, json!({ "checklist": checklist }), result)
        }
    };

    let uses_seed = plan.bootstrap.is_some();
    let doc = json!({
        "provenance": {
            "steps": STEPS,
            "method": plan.method,
            "seed": uses_seed.then_some(seed),
            "inputs": inputs,
            "plan": plan,
        },
        "estimand": estimand,
        "diagnostics": diagnostics,
        "result": result,
    });
    ctx.outputs.write_document("report", &doc)?;
    Ok(())
}

type Sections = (Value, Value, Value);

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    Ok(serde_json::to_value(v).map_err(extctrl_core::Error::from)?)
}

fn run_weighting_plan(
    plan: &AnalysisPlan,
    data: &Dataset,
    seed: u64,
    checklist: Option<extctrl_core::diagnostics::ChecklistReport>,
    ctx: &Context,
) -> Result<Sections, Failure> {
    let estimand = plan.resolved_estimand()?;
    let mut analysis = WeightingAnalysis::new(
        data.covariate_names().to_vec(),
        estimand.clone(),
        resolve_scale(plan.scale.as_deref(), data.outcome_kind())?,
    );
    analysis.horizon = plan.horizon;
    let bootstrap = plan
        .bootstrap
        .as_ref()
        .map(|b| bootstrap_config(b.replicates, b.level, seed, Resampling::StratifiedByGroup))
        .transpose()?;
    let settings = WeightingSettings {
        analysis: &analysis,
        band: plan.positivity_band,
        threshold: plan.smd_threshold,
        fail_on_overlap: plan.fail_on_overlap,
        checklist: checklist.clone(),
        bootstrap,
    };
    let run = run_weighting(data, &settings)?;
    let out = &run.output;
    ctx.outputs
        .write_table("weights", &weights_table(data, &out.model.scores, &out.weights.weights))?;
    ctx.outputs.write_table("balance", &balance_rows(&run.balance))?;
    if let Some((t, e)) = &out.curves {
        ctx.outputs.write_table("curves", &curves_table(t, e))?;
    }
    let diagnostics = json!({
        "positivity": run.positivity,
        "balance": run.balance,
        "checklist": checklist,
        "dropped_constant": out.model.dropped_constant,
    });
    Ok((to_value(&estimand)?, diagnostics, to_value(&out.report)?))
}

fn run_aggregate_plan(
    plan: &AnalysisPlan,
    data: &Dataset,
    aggregate: Option<&Path>,
    seed: u64,
    checklist: Option<extctrl_core::diagnostics::ChecklistReport>,
    ctx: &Context,
) -> Result<Sections, Failure> {
    let estimand = plan.resolved_estimand()?;
    let target = load_aggregate(aggregate.expect("validated"))?;
    let scale = resolve_scale(plan.scale.as_deref(), data.outcome_kind())?;
    let bootstrap = plan
        .bootstrap
        .as_ref()
        .map(|b| bootstrap_config(b.replicates, b.level, seed, Resampling::TrialOnly))
        .transpose()?;
    let mut run = if plan.method == PlanMethod::Maic {
        let analysis = MaicAnalysis {
            target,
            covariates: plan.covariates.clone(),
            options: MaicOptions {
                match_variances: plan.match_variances,
                ..MaicOptions::default()
            },
            scale,
            compare: CompareOptions {
                continuity_correction: plan.continuity_correction,
            },
        };
        run_maic(data, &analysis, bootstrap.as_ref())?
    } else {
        let link = match &plan.link {
            Some(l) => l.parse()?,
            None => default_link(data.outcome_kind())?,
        };
        let analysis = StcAnalysis {
            target,
            covariates: plan.covariates.clone(),
            link,
            scale,
        };
        run_stc(data, &analysis, bootstrap.as_ref())?
    };
    if let Some(c) = &checklist {
        if let Value::Object(m) = &mut run.report {
            if let Some(Value::Array(caveats)) = m.get_mut("caveats") {
                caveats.extend(c.caveats.iter().cloned().map(Value::String));
            }
            if let Some(Value::Object(d)) = m.get_mut("diagnostics") {
                d.insert("checklist".into(), to_value(c)?);
            }
        }
    }
    let mut diagnostics = json!({ "checklist": checklist });
    if let Some(fit) = &run.maic {
        ctx.outputs.write_table("weights", &maic_weights_table(data, fit))?;
        ctx.outputs.write_table("balance", &maic_balance_table(data, fit)?)?;
        diagnostics["ess"] = json!(fit.ess);
    }
    Ok((to_value(&estimand)?, diagnostics, run.report))
}
