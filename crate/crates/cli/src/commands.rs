//! Command implementations: thin orchestration over the library, plus the
//! rayon-parallel bootstrap driver. Replicate b always consumes RNG stream
//! b, so results are bit-identical for any `--threads` value.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;

use stagdid_core::data::{derive_treatment, AdoptionSchedule, ObservationTable};
use stagdid_core::imputation::{
    att_by_horizon, att_by_subgroup, att_overall, fit_counterfactual, impute_effects, placebo,
    AttWeighting, EventStudyCurve,
};
use stagdid_core::inference::{replicate_vec, BootstrapPlan, Flavor, WildSource};
use stagdid_core::math::sample_sd;
use stagdid_core::pretrend::{fit_leads, joint_test, LeadCovariance};
use stagdid_core::simulate;
use stagdid_core::twfe::{estimate_twfe, selection_test, trend_test, TwfeSpec};

use crate::args::*;
use crate::csvio;
use crate::error::{CliError, Result};
use crate::output::*;

const Z975: f64 = 1.959963984540054;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Pretrend(args) => pretrend(args),
        Command::Twfe(args) => twfe(args),
        Command::TrendTest(args) => trend_test_cmd(args),
        Command::SelectionTest(args) => selection_test_cmd(args),
        Command::Placebo(args) => placebo_cmd(args),
        Command::Index(args) => index_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
    }
}

fn plan_from(args: &BootstrapArgs) -> Result<Option<BootstrapPlan>> {
    if args.bootstrap == 0 {
        return Ok(None);
    }
    let seed = args
        .seed
        .ok_or_else(|| CliError::Usage(String::from("--seed is required when bootstrap > 0")))?;
    let flavor = match args.flavor {
        FlavorArg::Pairs => Flavor::PairsCluster,
        FlavorArg::Wild => Flavor::WildCluster,
    };
    Ok(Some(
        BootstrapPlan::new(seed)
            .with_iterations(args.bootstrap)
            .with_flavor(flavor),
    ))
}

/// Runs the vector bootstrap across a thread pool; replicates stay paired
/// by iteration index regardless of scheduling.
fn run_bootstrap<F>(
    table: &ObservationTable,
    plan: &BootstrapPlan,
    wild: Option<&WildSource>,
    threads: usize,
    estimator: &F,
) -> Result<(Vec<Vec<f64>>, u32)>
where
    F: Fn(&ObservationTable) -> stagdid_core::error::Result<Vec<f64>> + Sync,
{
    let clusters = table.rows_by_cluster();
    if clusters.len() < 2 {
        return Err(CliError::Data(String::from("bootstrap needs at least 2 clusters")));
    }
    if plan.flavor == Flavor::WildCluster && wild.is_none() {
        return Err(CliError::Data(String::from("wild bootstrap needs a fitted decomposition")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let raw: Vec<Option<Vec<f64>>> = pool.install(|| {
        (0..plan.iterations as u64)
            .into_par_iter()
            .map(|b| replicate_vec(table, plan, wild, &clusters, estimator, b))
            .collect()
    });
    let discarded = raw.iter().filter(|r| r.is_none()).count() as u32;
    let replicates: Vec<Vec<f64>> = raw.into_iter().flatten().collect();
    if replicates.is_empty() {
        return Err(CliError::Data(String::from("all bootstrap resamples were degenerate")));
    }
    Ok((replicates, discarded))
}

fn column_sds(replicates: &[Vec<f64>]) -> Vec<f64> {
    let k = replicates[0].len();
    (0..k)
        .map(|j| {
            let col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            sample_sd(&col)
        })
        .collect()
}

fn weighting_of(arg: WeightingArg) -> AttWeighting {
    match arg {
        WeightingArg::Observation => AttWeighting::Observation,
        WeightingArg::Group => AttWeighting::GroupEqual,
    }
}

fn input_config(args: &InputArgs) -> serde_json::Value {
    json!({
        "input": args.input.display().to_string(),
        "outcome": args.outcome,
        "group": args.group,
        "time": args.time,
        "adoption": args.adoption,
        "unit": args.unit,
        "cluster": args.cluster,
        "weight": args.weight,
        "covariates": args.covariates,
        "subgroups": args.subgroups,
        "anticipation": args.anticipation,
    })
}

fn bootstrap_config(args: &BootstrapArgs) -> serde_json::Value {
    json!({
        "bootstrap": args.bootstrap,
        "flavor": match args.flavor { FlavorArg::Pairs => "pairs", FlavorArg::Wild => "wild" },
        "seed": args.seed,
        "threads": args.threads,
    })
}

fn subgroup_atts(
    set: &stagdid_core::imputation::EffectSet,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out = BTreeMap::new();
    for label in set.subgroups.keys() {
        let atts = att_by_subgroup(set, label)?;
        out.insert(
            label.clone(),
            atts.categories
                .iter()
                .map(|(cat, att, _)| (cat.clone(), *att))
                .collect(),
        );
    }
    Ok(out)
}

/// Baseline decomposition for the wild flavor: counterfactual prediction
/// plus the overall ATT on treated rows; unidentified rows are frozen.
fn wild_source(
    table: &ObservationTable,
    view: &stagdid_core::data::TreatmentView,
    model: &stagdid_core::imputation::CounterfactualModel,
    att: f64,
) -> WildSource {
    let n = table.n_rows();
    let mut fitted = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for row in 0..n {
        let pred = model.predict(
            table.group.codes[row],
            table.time_codes[row],
            table.covariate_row(row),
        );
        let f = match pred {
            Some(p) if view.treated[row] => p + att,
            Some(p) => p,
            None => table.outcome[row],
        };
        fitted.push(f);
        residuals.push(table.outcome[row] - f);
    }
    WildSource { fitted, residuals }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (table, schedule) = csvio::read_panel(&args.input)?;
    let schedule = schedule.with_anticipation(args.input.anticipation);
    let weighting = weighting_of(args.weighting);
    let view = derive_treatment(&table, &schedule)?;
    let model = fit_counterfactual(&table, &view)?;
    let set = impute_effects(&model, &table, &view)?;
    let att = att_overall(&set, weighting)?;
    let mut curve = att_by_horizon(&set, args.horizon);

    let config = json!({
        "command": "estimate",
        "horizon": args.horizon,
        "weighting": match args.weighting { WeightingArg::Observation => "observation", WeightingArg::Group => "group" },
        "input": input_config(&args.input),
        "inference": bootstrap_config(&args.bootstrap),
    });
    let mut out = EstimateJson::new("imputation", att, config);
    out.n_treated = view.n_treated();
    out.n_unidentified = set.unidentified.len();
    out.subgroups = subgroup_atts(&set)?;
    out.seed = args.bootstrap.seed.filter(|_| args.bootstrap.bootstrap > 0);
    out.bootstrap_iterations = args.bootstrap.bootstrap;

    if let Some(plan) = plan_from(&args.bootstrap)? {
        let target_h: Vec<i64> = curve.points.iter().map(|p| p.h).collect();
        let horizon = args.horizon;
        let sched = schedule.clone();
        let estimator = move |t: &ObservationTable| -> stagdid_core::error::Result<Vec<f64>> {
            let view = derive_treatment(t, &sched)?;
            let model = fit_counterfactual(t, &view)?;
            let set = impute_effects(&model, t, &view)?;
            let mut v = vec![att_overall(&set, weighting)?];
            let curve = att_by_horizon(&set, horizon);
            for &h in &target_h {
                match curve.at(h) {
                    Some(p) => v.push(p.att),
                    None => return Err(stagdid_core::Error::EmptyEffectSet),
                }
            }
            Ok(v)
        };
        let wild = wild_source(&table, &view, &model, att);
        let (reps, discarded) =
            run_bootstrap(&table, &plan, Some(&wild), args.bootstrap.threads, &estimator)?;
        let sds = column_sds(&reps);
        out.se = Some(sds[0]);
        out.ci95 = Some([att - Z975 * sds[0], att + Z975 * sds[0]]);
        out.discarded_replicates = Some(discarded);
        for (point, sd) in curve.points.iter_mut().zip(&sds[1..]) {
            point.se = Some(*sd);
        }
    }
    out.horizons = curve
        .points
        .iter()
        .map(|p| HorizonJson { h: p.h, att: p.att, se: p.se, n: p.n })
        .collect();

    if let Some(path) = &args.event_study {
        emit_curve(path, &curve)?;
    }
    write_json(args.output.as_deref(), &out)
}

fn emit_curve(path: &std::path::Path, curve: &EventStudyCurve) -> Result<()> {
    csvio::emit_event_study(path, Some(curve), None, &[])
}

fn pretrend(args: PretrendArgs) -> Result<()> {
    let (table, schedule) = csvio::read_panel(&args.input)?;
    let schedule = schedule.with_anticipation(args.input.anticipation);
    let cov = match args.lead_cov {
        LeadCovArg::Bootstrap => LeadCovariance::Bootstrap(
            plan_from(&args.bootstrap)?.ok_or_else(|| {
                CliError::Usage(String::from("--lead-cov bootstrap needs --bootstrap > 0"))
            })?,
        ),
        LeadCovArg::Cluster => LeadCovariance::ClusterRobust,
        LeadCovArg::Ols => LeadCovariance::Ols,
    };
    let profile = fit_leads(&table, &schedule, args.leads, &cov)?;
    let jt = joint_test(&profile);
    let bootstrap_used = matches!(cov, LeadCovariance::Bootstrap(_));
    let out = PretrendJson {
        estimator: "pretrend",
        leads: profile
            .leads
            .iter()
            .map(|l| LeadJson { p: l.p, gamma: l.gamma, se: l.se, t_stat: l.t_stat })
            .collect(),
        missing: profile.missing.clone(),
        chi2: jt.chi2,
        df: jt.df,
        p_value: jt.p_value,
        pseudo_inverse: jt.pseudo_inverse,
        seed: args.bootstrap.seed.filter(|_| bootstrap_used),
        bootstrap_iterations: if bootstrap_used { args.bootstrap.bootstrap } else { 0 },
        config: json!({
            "command": "pretrend",
            "leads": args.leads,
            "lead_cov": match args.lead_cov {
                LeadCovArg::Bootstrap => "bootstrap",
                LeadCovArg::Cluster => "cluster",
                LeadCovArg::Ols => "ols",
            },
            "input": input_config(&args.input),
            "inference": bootstrap_config(&args.bootstrap),
        }),
    };
    if let Some(path) = &args.event_study {
        let counts: Vec<usize> = profile
            .leads
            .iter()
            .map(|l| lead_support(&table, &schedule, l.p))
            .collect();
        csvio::emit_event_study(path, None, Some((&profile, &counts)), &[])?;
    }
    write_json(args.output.as_deref(), &out)
}

/// Rows sitting exactly p periods before their group's adoption.
fn lead_support(table: &ObservationTable, schedule: &AdoptionSchedule, p: i64) -> usize {
    (0..table.n_rows())
        .filter(|&row| {
            let group = &table.group.levels[table.group.codes[row] as usize];
            schedule
                .adoption_year(group)
                .map(|e| table.time[row] - e == p)
                .unwrap_or(false)
        })
        .count()
}

fn twfe(args: TwfeArgs) -> Result<()> {
    let (table, schedule) = csvio::read_panel(&args.input)?;
    let schedule = schedule.with_anticipation(args.input.anticipation);
    let view = derive_treatment(&table, &schedule)?;
    let spec = TwfeSpec {
        group_fe: true,
        time_fe: true,
        group_time_fe: args.group_time_fe,
        interaction_labels: args.interact.clone().unwrap_or_default(),
    };
    let fit = estimate_twfe(&table, &view, &spec)?;
    let config = json!({
        "command": "twfe",
        "interact": args.interact,
        "group_time_fe": args.group_time_fe,
        "input": input_config(&args.input),
        "inference": bootstrap_config(&args.bootstrap),
    });
    let mut out = EstimateJson::new("twfe", fit.beta1, config);
    out.n_treated = view.n_treated();
    out.interactions = fit
        .interactions
        .iter()
        .map(|(label, category, coefficient)| InteractionJson {
            label: label.clone(),
            category: category.clone(),
            coefficient: *coefficient,
        })
        .collect();
    out.seed = args.bootstrap.seed.filter(|_| args.bootstrap.bootstrap > 0);
    out.bootstrap_iterations = args.bootstrap.bootstrap;
    if let Some(plan) = plan_from(&args.bootstrap)? {
        let sched = schedule.clone();
        let spec2 = spec.clone();
        let estimator = move |t: &ObservationTable| -> stagdid_core::error::Result<Vec<f64>> {
            let view = derive_treatment(t, &sched)?;
            estimate_twfe(t, &view, &spec2).map(|f| vec![f.beta1])
        };
        let wild = WildSource { fitted: fit.fitted.clone(), residuals: fit.residuals.clone() };
        let (reps, discarded) =
            run_bootstrap(&table, &plan, Some(&wild), args.bootstrap.threads, &estimator)?;
        let sd = column_sds(&reps)[0];
        out.se = Some(sd);
        out.ci95 = Some([fit.beta1 - Z975 * sd, fit.beta1 + Z975 * sd]);
        out.discarded_replicates = Some(discarded);
    }
    write_json(args.output.as_deref(), &out)
}

fn trend_test_cmd(args: TrendTestArgs) -> Result<()> {
    let (table, schedule) = csvio::read_panel(&args.input)?;
    let schedule = schedule.with_anticipation(args.input.anticipation);
    let view = derive_treatment(&table, &schedule)?;
    let fit = trend_test(&table, &view, args.cutoff)?;
    let config = json!({
        "command": "trend-test",
        "cutoff": args.cutoff,
        "input": input_config(&args.input),
    });
    let mut out = EstimateJson::new("trend_test", fit.delta3, config);
    out.n_treated = view.n_treated();
    out.se = Some(fit.se_delta3);
    out.ci95 = Some([
        fit.delta3 - Z975 * fit.se_delta3,
        fit.delta3 + Z975 * fit.se_delta3,
    ]);
    write_json(args.output.as_deref(), &out)
}

fn selection_test_cmd(args: SelectionTestArgs) -> Result<()> {
    let districts = csvio::read_districts(
        &args.input,
        &args.district,
        &args.adopted,
        &args.outcome,
        &args.covariates,
    )?;
    let fit = selection_test(&districts)?;
    let config = json!({
        "command": "selection-test",
        "input": args.input.display().to_string(),
        "district": args.district,
        "adopted": args.adopted,
        "outcome": args.outcome,
        "covariates": args.covariates,
    });
    let mut out = EstimateJson::new("selection_test", fit.gamma1, config);
    out.se = Some(fit.se_gamma1);
    out.ci95 = Some([
        fit.gamma1 - Z975 * fit.se_gamma1,
        fit.gamma1 + Z975 * fit.se_gamma1,
    ]);
    write_json(args.output.as_deref(), &out)
}

fn placebo_cmd(args: PlaceboArgs) -> Result<()> {
    let (table, schedule) = csvio::read_panel(&args.input)?;
    let schedule = schedule.with_anticipation(args.input.anticipation);
    let (label, value) = args
        .keep
        .split_once('=')
        .ok_or_else(|| CliError::Usage(String::from("--keep must look like label=value")))?;
    let column = table
        .subgroups
        .get(label)
        .ok_or_else(|| CliError::Usage(format!("unknown subgroup label: {label}")))?;
    let code = column
        .levels
        .iter()
        .position(|l| l == value)
        .ok_or_else(|| CliError::Data(format!("no rows with {label}={value}")))?
        as u32;
    let keep: Vec<bool> = column.codes.iter().map(|&c| c == code).collect();
    let att = placebo(&table, &schedule, &keep)?;

    let kept_rows: Vec<usize> = (0..table.n_rows()).filter(|&r| keep[r]).collect();
    let sub = table.select(&kept_rows);
    let sub_view = derive_treatment(&sub, &schedule)?;

    let config = json!({
        "command": "placebo",
        "keep": args.keep,
        "input": input_config(&args.input),
        "inference": bootstrap_config(&args.bootstrap),
    });
    let mut out = EstimateJson::new("placebo", att, config);
    out.n_treated = sub_view.n_treated();
    out.seed = args.bootstrap.seed.filter(|_| args.bootstrap.bootstrap > 0);
    out.bootstrap_iterations = args.bootstrap.bootstrap;
    if let Some(plan) = plan_from(&args.bootstrap)? {
        let sched = schedule.clone();
        let label = String::from(label);
        let estimator = move |t: &ObservationTable| -> stagdid_core::error::Result<Vec<f64>> {
            let keep: Vec<bool> = t.subgroups[&label].codes.iter().map(|&c| c == code).collect();
            placebo(t, &sched, &keep).map(|v| vec![v])
        };
        let (reps, discarded) =
            run_bootstrap(&table, &plan, None, args.bootstrap.threads, &estimator)?;
        let sd = column_sds(&reps)[0];
        out.se = Some(sd);
        out.ci95 = Some([att - Z975 * sd, att + Z975 * sd]);
        out.discarded_replicates = Some(discarded);
    }
    write_json(args.output.as_deref(), &out)
}

fn index_cmd(args: IndexArgs) -> Result<()> {
    let (header, rows) = csvio::read_columns(&args.input)?;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(args.columns.len());
    for name in &args.columns {
        let j = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("column not in header: {name}")))?;
        // unparseable cells become incomplete-case markers
        columns.push(
            rows.iter()
                .map(|r| r.get(j).and_then(|s| s.trim().parse().ok()).unwrap_or(f64::NAN))
                .collect(),
        );
    }
    let index = stagdid_core::indices::pc1_index(&columns, &args.columns)?;
    let out = IndexJson {
        estimator: "index",
        columns: index.column_names.clone(),
        loadings: index.loadings.clone(),
        explained_share: index.explained_share,
        n_complete: index.n_complete,
        n_incomplete: index.n_incomplete,
        config: json!({
            "command": "index",
            "input": args.input.display().to_string(),
            "columns": args.columns,
        }),
    };
    if let Some(path) = &args.scores {
        csvio::write_scores(path, &header, &rows, &index.scores)?;
    }
    write_json(args.output.as_deref(), &out)
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let mut cfg = simulate::preset(&args.preset, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(u) = args.units_per_cell {
        cfg.units_per_cell = u;
    }
    if let Some(sd) = args.noise {
        cfg.noise_sd = sd;
    }
    let (table, schedule, truth) = simulate::generate(&cfg)?;
    csvio::write_panel(&args.out, &table, &schedule)?;
    if let Some(path) = &args.truth {
        let out = TruthJson {
            preset: args.preset.clone(),
            seed: args.seed,
            att_overall: truth.att_overall,
            horizons: truth
                .horizon_curve
                .iter()
                .map(|(&h, &att)| HorizonJson { h, att, se: None, n: 0 })
                .collect(),
            under_identified: truth.under_identified,
        };
        write_json(Some(path), &out)?;
    }
    Ok(())
}
