//! The analysis subcommands and the tables they share with `run`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use extctrl_core::analysis::naive_comparison;
use extctrl_core::balancing::balancing_weights;
use extctrl_core::borrow::{a0_sweep, power_prior_posterior, BetaPrior, Counts};
use extctrl_core::dataset::{load_aggregate, load_dataset, AggregateOutcome};
use extctrl_core::diagnostics::{
    balance_table, comparability_checklist, BalanceTable, ChecklistReport, ComparabilityChecklist,
};
use extctrl_core::maic::{CompareOptions, MaicFit, MaicOptions};
use extctrl_core::propensity::{positivity_report, PositivityReport, PropensityModel};
use extctrl_core::simulate::{generate, ScenarioConfig};
use extctrl_core::stc::Link;
use extctrl_core::{
    bootstrap_ci, estimate_propensity, AggregateSummary, BootstrapConfig, CsvSchema, Dataset, Estimand,
    Group, MaicAnalysis, OutcomeKind, Resampling, Scale, StcAnalysis, SurvivalCurve, WeightingAnalysis,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::failure::{invalid, Failure};
use crate::output::{Outputs, Table};

/// Global options every subcommand sees.
pub struct Context {
    pub seed: Option<u64>,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Patient-level CSV with `id`, `group` and outcome columns.
    #[arg(long)]
    pub data: PathBuf,
    /// binary, continuous or survival.
    #[arg(long, default_value = "binary")]
    pub outcome: String,
    /// Covariate columns, comma separated. Defaults to every remaining column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
}

impl DataArgs {
    pub fn outcome_kind(&self) -> Result<OutcomeKind, Failure> {
        Ok(self.outcome.parse()?)
    }

    pub fn load(&self) -> Result<Dataset, Failure> {
        load_data(&self.data, self.outcome_kind()?, &self.covariates)
    }
}

pub fn load_data(path: &Path, kind: OutcomeKind, covariates: &[String]) -> Result<Dataset, Failure> {
    let mut schema = CsvSchema::new(kind);
    if !covariates.is_empty() {
        schema = schema.with_covariates(covariates.iter().cloned());
    }
    Ok(load_dataset(path, &schema)?)
}

pub fn load_checklist(path: &Path) -> Result<ComparabilityChecklist, Failure> {
    let text = fs::read_to_string(path).map_err(extctrl_core::Error::from)?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("checklist {}: {e}", path.display())))
}

/// Scale used when none is given: mean difference for continuous outcomes,
/// risk difference otherwise.
pub fn default_scale(kind: OutcomeKind) -> Scale {
    match kind {
        OutcomeKind::Continuous => Scale::MeanDifference,
        _ => Scale::RiskDifference,
    }
}

pub fn resolve_scale(scale: Option<&str>, kind: OutcomeKind) -> Result<Scale, Failure> {
    let scale = match scale {
        Some(s) => s.parse()?,
        None => default_scale(kind),
    };
    scale.check(kind)?;
    Ok(scale)
}

pub fn bootstrap_config(
    replicates: usize,
    level: f64,
    seed: u64,
    resampling: Resampling,
) -> Result<BootstrapConfig, Failure> {
    let cfg = BootstrapConfig {
        replicates,
        level,
        seed,
        resampling,
        ..BootstrapConfig::default()
    }
    .with_env_threads()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn scores_table(data: &Dataset, model: &PropensityModel) -> Table {
    let mut t = Table::new(vec!["id", "score"]);
    for (r, &s) in data.records().iter().zip(&model.scores) {
        t.push(vec![r.id.as_str().into(), s.into()]);
    }
    t
}

pub fn weights_table(data: &Dataset, scores: &[f64], weights: &[f64]) -> Table {
    let mut t = Table::new(vec!["id", "group", "score", "weight"]);
    for ((r, &s), &w) in data.records().iter().zip(scores).zip(weights) {
        t.push(vec![r.id.as_str().into(), r.group.as_str().into(), s.into(), w.into()]);
    }
    t
}

pub fn balance_rows(balance: &BalanceTable) -> Table {
    let mut t = Table::new(vec![
        "covariate",
        "trial_mean",
        "external_mean",
        "smd_unweighted",
        "weighted_trial_mean",
        "weighted_external_mean",
        "smd_weighted",
    ]);
    for r in &balance.rows {
        t.push(vec![
            r.covariate.as_str().into(),
            r.trial_mean.into(),
            r.external_mean.into(),
            r.smd_unweighted.into(),
            r.weighted_trial_mean.into(),
            r.weighted_external_mean.into(),
            r.smd_weighted.into(),
        ]);
    }
    t
}

pub fn curves_table(trial: &SurvivalCurve, external: &SurvivalCurve) -> Table {
    let mut t = Table::new(vec!["group", "time", "survival", "at_risk"]);
    for (group, c) in [(Group::Trial, trial), (Group::External, external)] {
        for i in 0..c.times.len() {
            t.push(vec![
                group.as_str().into(),
                c.times[i].into(),
                c.survival[i].into(),
                c.at_risk[i].into(),
            ]);
        }
    }
    t
}

/// Trial subjects with their MAIC weights.
pub fn maic_weights_table(data: &Dataset, fit: &MaicFit) -> Table {
    let mut t = Table::new(vec!["id", "weight"]);
    let trial = data.records().iter().filter(|r| r.group.is_trial());
    for (r, &w) in trial.zip(&fit.weights) {
        t.push(vec![r.id.as_str().into(), w.into()]);
    }
    t
}

/// Target means against unweighted and MAIC-weighted trial means.
pub fn maic_balance_table(data: &Dataset, fit: &MaicFit) -> Result<Table, Failure> {
    let mut t = Table::new(vec!["covariate", "target_mean", "trial_mean", "weighted_trial_mean"]);
    let trial = data.trial_only();
    for (k, name) in fit.matched_covariates.iter().enumerate() {
        let x = trial.covariate_column(name)?;
        let raw = x.iter().sum::<f64>() / x.len() as f64;
        t.push(vec![
            name.as_str().into(),
            fit.target_means[k].into(),
            raw.into(),
            fit.achieved_means[k].into(),
        ]);
    }
    Ok(t)
}

pub fn maic_summary(fit: &MaicFit) -> Value {
    json!({
        "matched_covariates": fit.matched_covariates,
        "alpha": fit.alpha,
        "target_means": fit.target_means,
        "achieved_means": fit.achieved_means,
        "ess": fit.ess,
        "converged": fit.converged,
        "iterations": fit.iterations,
    })
}

fn merge(base: impl Serialize, extra: Value) -> Result<Value, Failure> {
    let mut v = serde_json::to_value(base).map_err(extctrl_core::Error::from)?;
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    Ok(v)
}

#[derive(Debug, Clone, Args)]
pub struct PsFitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Positivity band half-width: scores at or beyond a and 1 − a are flagged.
    #[arg(long, default_value_t = 0.1)]
    pub band: f64,
}

pub fn ps_fit(args: &PsFitArgs, ctx: &Context) -> Result<(), Failure> {
    let data = args.data.load()?;
    let model = estimate_propensity(&data, data.covariate_names(), &Default::default())?;
    let positivity = positivity_report(&model, &data, args.band)?;
    ctx.outputs.write_table("scores", &scores_table(&data, &model))?;
    ctx.outputs.write_document(
        "positivity",
        &json!({ "model": model.glm, "covariates": model.covariate_names,
                 "dropped_constant": model.dropped_constant, "positivity": positivity }),
    )?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// ate, att, atc, ato, matching or trim:<a>.
    #[arg(long, default_value = "ate")]
    pub estimand: String,
}

fn fit_weights(data: &Dataset, estimand: &str) -> Result<(PropensityModel, extctrl_core::WeightSet), Failure> {
    let estimand: Estimand = estimand.parse()?;
    let model = estimate_propensity(data, data.covariate_names(), &Default::default())?;
    let weights = balancing_weights(&model, data, &estimand)?;
    Ok((model, weights))
}

pub fn weight(args: &WeightArgs, ctx: &Context) -> Result<(), Failure> {
    let data = args.data.load()?;
    let (model, ws) = fit_weights(&data, &args.estimand)?;
    ctx.outputs
        .write_table("weights", &weights_table(&data, &model.scores, &ws.weights))?;
    ctx.outputs.write_document(
        "ess",
        &json!({ "estimand": ws.estimand, "ess_trial": ws.ess_treated,
                 "ess_external": ws.ess_control, "n_zero_weight": ws.n_zero_weight }),
    )?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "ate")]
    pub estimand: String,
    /// Largest acceptable absolute weighted SMD.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Comparability checklist JSON.
    #[arg(long)]
    pub checklist: Option<PathBuf>,
}

pub fn balance(args: &BalanceArgs, ctx: &Context) -> Result<(), Failure> {
    let data = args.data.load()?;
    let (_, ws) = fit_weights(&data, &args.estimand)?;
    let table = balance_table(&data, &ws, args.threshold)?;
    let checklist = args
        .checklist
        .as_deref()
        .map(|p| load_checklist(p).map(|c| comparability_checklist(&c)))
        .transpose()?;
    ctx.outputs.write_table("balance", &balance_rows(&table))?;
    ctx.outputs.write_document(
        "balance",
        &json!({ "estimand": ws.estimand, "balance": table, "checklist": checklist }),
    )?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    /// Number of bootstrap replicates; 0 skips the interval.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Confidence level of the bootstrap interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "ate")]
    pub estimand: String,
    /// rd, rr, or or md. Defaults to md for continuous outcomes, rd otherwise.
    #[arg(long)]
    pub scale: Option<String>,
    /// Time at which survival probabilities are compared.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    #[arg(long, default_value_t = 0.1)]
    pub band: f64,
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    #[arg(long)]
    pub checklist: Option<PathBuf>,
}

/// Everything a weighting analysis produces before it is written out.
pub struct WeightingRun {
    pub output: extctrl_core::analysis::WeightingOutput,
    pub positivity: PositivityReport,
    pub balance: BalanceTable,
}

pub struct WeightingSettings<'a> {
    pub analysis: &'a WeightingAnalysis,
    pub band: f64,
    pub threshold: f64,
    pub fail_on_overlap: bool,
    pub checklist: Option<ChecklistReport>,
    pub bootstrap: Option<BootstrapConfig>,
}

pub fn run_weighting(data: &Dataset, s: &WeightingSettings) -> Result<WeightingRun, Failure> {
    let model = estimate_propensity(data, &s.analysis.covariates, &s.analysis.irls)?;
    let positivity = positivity_report(&model, data, s.band)?;
    if s.fail_on_overlap && positivity.insufficient_overlap {
        return Err(Failure::PositivityHardFail(format!(
            "{:.1}% of trial and {:.1}% of external subjects have scores outside [{}, {}]",
            100.0 * positivity.trial_outside_proportion,
            100.0 * positivity.external_outside_proportion,
            s.band,
            1.0 - s.band
        )));
    }
    let mut output = s.analysis.fit(data)?;
    let balance = balance_table(data, &output.weights, s.threshold)?;
    let report = &mut output.report;
    report.diagnostics.positivity = Some(positivity.clone());
    report.diagnostics.balance = Some(balance.clone());
    if let Some(c) = &s.checklist {
        report.caveats.extend(c.caveats.iter().cloned());
        report.diagnostics.checklist = Some(c.clone());
    }
    if let Some(cfg) = &s.bootstrap {
        let r = bootstrap_ci(data, |d| s.analysis.replicate(d), cfg)?;
        report.set_ci(r.interval());
        report.provenance.seed = Some(cfg.seed);
    }
    Ok(WeightingRun {
        output,
        positivity,
        balance,
    })
}

pub fn write_weighting(run: &WeightingRun, data: &Dataset, outputs: &Outputs) -> Result<(), Failure> {
    let out = &run.output;
    outputs.write_table("weights", &weights_table(data, &out.model.scores, &out.weights.weights))?;
    outputs.write_table("balance", &balance_rows(&run.balance))?;
    if let Some((trial, external)) = &out.curves {
        outputs.write_table("curves", &curves_table(trial, external))?;
    }
    Ok(())
}

pub fn compare(args: &CompareArgs, ctx: &Context) -> Result<(), Failure> {
    let data = args.data.load()?;
    let kind = data.outcome_kind();
    let mut analysis = WeightingAnalysis::new(
        data.covariate_names().to_vec(),
        args.estimand.parse()?,
        resolve_scale(args.scale.as_deref(), kind)?,
    );
    analysis.horizon = args.horizon;
    let bootstrap = (args.bootstrap.bootstrap > 0)
        .then(|| {
            bootstrap_config(
                args.bootstrap.bootstrap,
                args.bootstrap.level,
                ctx.seed.unwrap_or(0),
                Resampling::StratifiedByGroup,
            )
        })
        .transpose()?;
    let checklist = args
        .checklist
        .as_deref()
        .map(|p| load_checklist(p).map(|c| comparability_checklist(&c)))
        .transpose()?;
    let settings = WeightingSettings {
        analysis: &analysis,
        band: args.band,
        threshold: args.threshold,
        fail_on_overlap: false,
        checklist,
        bootstrap,
    };
    let run = run_weighting(&data, &settings)?;
    let naive = naive_comparison(&data, analysis.scale, analysis.horizon)?;
    write_weighting(&run, &data, &ctx.outputs)?;
    let doc = merge(&run.output.report, json!({ "naive_estimate": naive.estimate }))?;
    ctx.outputs.write_document("report", &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct MaicArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Aggregate summary JSON of the external population.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub scale: Option<String>,
    /// Also match second moments, using the aggregate standard deviations.
    #[arg(long)]
    pub match_variances: bool,
    /// Add 0.5 to each cell of a ratio contrast with a zero cell.
    #[arg(long)]
    pub continuity_correction: bool,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
}

fn require_covariates(covariates: &[String], method: &str) -> Result<(), Failure> {
    if covariates.is_empty() {
        return Err(invalid(format!("{method} needs an explicit covariate list")));
    }
    Ok(())
}

pub struct AggregateRun {
    pub report: Value,
    pub maic: Option<MaicFit>,
}

pub fn run_maic(
    data: &Dataset,
    analysis: &MaicAnalysis,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<AggregateRun, Failure> {
    let (fit, mut report) = analysis.fit(data)?;
    if let Some(cfg) = bootstrap {
        let r = bootstrap_ci(data, |d| analysis.replicate(d), cfg)?;
        report.set_ci(r.interval());
        report.provenance.seed = Some(cfg.seed);
    }
    Ok(AggregateRun {
        report: merge(&report, json!({ "maic": maic_summary(&fit) }))?,
        maic: Some(fit),
    })
}

pub fn maic(args: &MaicArgs, ctx: &Context) -> Result<(), Failure> {
    require_covariates(&args.data.covariates, "MAIC")?;
    let data = args.data.load()?;
    let target = load_aggregate(&args.target)?;
    let analysis = MaicAnalysis {
        scale: resolve_scale(args.scale.as_deref(), data.outcome_kind())?,
        target,
        covariates: args.data.covariates.clone(),
        options: MaicOptions {
            match_variances: args.match_variances,
            ..MaicOptions::default()
        },
        compare: CompareOptions {
            continuity_correction: args.continuity_correction,
        },
    };
    let bootstrap = aggregate_bootstrap(&args.bootstrap, ctx)?;
    let run = run_maic(&data, &analysis, bootstrap.as_ref())?;
    let fit = run.maic.as_ref().expect("MAIC run keeps its fit");
    ctx.outputs.write_table("maic_weights", &maic_weights_table(&data, fit))?;
    ctx.outputs.write_table("balance", &maic_balance_table(&data, fit)?)?;
    ctx.outputs.write_document("report", &run.report)?;
    Ok(())
}

fn aggregate_bootstrap(args: &BootstrapArgs, ctx: &Context) -> Result<Option<BootstrapConfig>, Failure> {
    (args.bootstrap > 0)
        .then(|| bootstrap_config(args.bootstrap, args.level, ctx.seed.unwrap_or(0), Resampling::TrialOnly))
        .transpose()
}

#[derive(Debug, Clone, Args)]
pub struct StcArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub target: PathBuf,
    /// identity (continuous outcomes) or logit (binary outcomes).
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long)]
    pub scale: Option<String>,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
}

pub fn default_link(kind: OutcomeKind) -> Result<Link, Failure> {
    match kind {
        OutcomeKind::Binary => Ok(Link::Logit),
        OutcomeKind::Continuous => Ok(Link::Identity),
        OutcomeKind::TimeToEvent => Err(invalid("STC supports binary and continuous outcomes only")),
    }
}

pub fn run_stc(
    data: &Dataset,
    analysis: &StcAnalysis,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<AggregateRun, Failure> {
    let result = analysis.fit(data)?;
    let mut report = result.report.clone();
    if let Some(cfg) = bootstrap {
        let r = bootstrap_ci(data, |d| analysis.replicate(d), cfg)?;
        report.set_ci(r.interval());
        report.provenance.seed = Some(cfg.seed);
    }
    let extra = json!({
        "stc": {
            "outcome_model": result.outcome_model,
            "predicted_external_outcome": result.predicted_external_outcome,
            "observed_external_outcome": result.observed_external_outcome,
        }
    });
    Ok(AggregateRun {
        report: merge(&report, extra)?,
        maic: None,
    })
}

pub fn stc(args: &StcArgs, ctx: &Context) -> Result<(), Failure> {
    require_covariates(&args.data.covariates, "STC")?;
    let data = args.data.load()?;
    let kind = data.outcome_kind();
    let link = match &args.link {
        Some(l) => l.parse()?,
        None => default_link(kind)?,
    };
    let analysis = StcAnalysis {
        target: load_aggregate(&args.target)?,
        covariates: args.data.covariates.clone(),
        link,
        scale: resolve_scale(args.scale.as_deref(), kind)?,
    };
    let bootstrap = aggregate_bootstrap(&args.bootstrap, ctx)?;
    let run = run_stc(&data, &analysis, bootstrap.as_ref())?;
    ctx.outputs.write_document("report", &run.report)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct BorrowArgs {
    /// Binary-outcome CSV; trial counts come from its trial rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Binary aggregate summary used as the external source instead of the
    /// external rows of `--data`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Discount exponent in [0, 1].
    #[arg(long)]
    pub a0: f64,
    /// Beta prior shape parameters.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
    pub prior: Vec<f64>,
    /// Credible level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Extra a0 values to summarize.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<f64>,
    /// Confirms the external controls were judged comparable to the trial.
    #[arg(long)]
    pub assume_comparable: bool,
}

pub struct BorrowInputs<'a> {
    pub data: &'a Dataset,
    pub aggregate: Option<&'a AggregateSummary>,
    pub a0: f64,
    pub prior: BetaPrior,
    pub level: f64,
    pub sweep: &'a [f64],
}

pub const NOT_COMPARABLE: &str = "power-prior borrowing assumes the external controls are comparable to the \
trial population; confirm this explicitly to proceed";

pub fn run_borrow(inputs: &BorrowInputs) -> Result<Value, Failure> {
    let trial = Counts::from_dataset(inputs.data, Group::Trial)?;
    let (external, source) = match inputs.aggregate {
        Some(agg) => match agg.outcome {
            AggregateOutcome::Binary { responders } => (Counts::new(responders, agg.n)?, "aggregate"),
            _ => return Err(invalid("power-prior borrowing needs a binary aggregate outcome")),
        },
        None => (Counts::from_dataset(inputs.data, Group::External)?, "dataset"),
    };
    let posterior = power_prior_posterior(trial, external, inputs.a0, inputs.prior)?;
    let summary = posterior.summary(inputs.level)?;
    let sweep = a0_sweep(trial, external, inputs.sweep, inputs.prior, inputs.level)?;
    Ok(json!({
        "method": "power_prior",
        "external_source": source,
        "trial": trial,
        "external": external,
        "prior": inputs.prior,
        "posterior": summary,
        "sweep": sweep,
    }))
}

pub fn borrow(args: &BorrowArgs, ctx: &Context) -> Result<(), Failure> {
    if !args.assume_comparable {
        return Err(invalid(format!("{NOT_COMPARABLE} (--assume-comparable)")));
    }
    let &[alpha, beta] = args.prior.as_slice() else {
        return Err(invalid("--prior takes two shape parameters, e.g. 1,1"));
    };
    let data = load_data(&args.data, OutcomeKind::Binary, &[])?;
    let aggregate = args.target.as_deref().map(load_aggregate).transpose()?;
    let doc = run_borrow(&BorrowInputs {
        data: &data,
        aggregate: aggregate.as_ref(),
        a0: args.a0,
        prior: BetaPrior { alpha, beta },
        level: args.level,
        sweep: &args.sweep,
    })?;
    ctx.outputs.write_document("borrow", &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Where to write the simulated dataset; defaults to `simulated.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs, ctx: &Context) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.scenario).map_err(extctrl_core::Error::from)?;
    let mut scenario: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| invalid(format!("scenario {}: {e}", args.scenario.display())))?;
    if let Some(seed) = ctx.seed {
        scenario.seed = seed;
    }
    let (data, truth) = generate(&scenario)?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.outputs.dir.join("simulated.csv"));
    let file = fs::File::create(&path).map_err(extctrl_core::Error::from)?;
    data.write_csv(file)?;
    ctx.outputs
        .write_document("truth", &json!({ "seed": scenario.seed, "truth": truth }))?;
    Ok(())
}
