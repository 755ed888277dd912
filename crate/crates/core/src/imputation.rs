//! The imputation estimator: fit group and time effects on untreated
//! observations only, impute untreated potential outcomes for treated
//! observations, and aggregate the gaps overall, by horizon, and by
//! subgroup.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{
    derive_treatment, untreated_components, AdoptionSchedule, CategoricalColumn,
    ObservationTable, TreatmentView,
};
use crate::error::{Error, Result};
use crate::regression::{fit_absorbed, AbsorbedFit, Factor};

/// Group and time effects fitted on the untreated subsample, usable as a
/// fitted-value oracle over (group, time, covariates).
#[derive(Debug, Clone)]
pub struct CounterfactualModel {
    /// Underlying absorbed WLS over the untreated rows, in row order.
    pub fit: AbsorbedFit,
    group_comp: Vec<usize>,
    time_comp: Vec<usize>,
    n_groups: usize,
    n_times: usize,
    covariate_arity: usize,
    /// Row mask the model was trained on (true = untreated).
    pub untreated_mask: Vec<bool>,
    pub n_components: usize,
}

impl CounterfactualModel {
    /// Counterfactual prediction for a (group level, time level, covariate)
    /// triple; None when the cell is outside the connected untreated design.
    pub fn predict(&self, group: u32, time: u32, covariates: &[f64]) -> Option<f64> {
        if self.group_comp[group as usize] != self.time_comp[time as usize] {
            return None;
        }
        self.fit.predict(&[group, time], covariates)
    }

    pub fn covariate_coefficients(&self) -> &[f64] {
        &self.fit.coef
    }

    pub fn group_effects(&self) -> &[f64] {
        &self.fit.factor_effects[0]
    }

    pub fn time_effects(&self) -> &[f64] {
        &self.fit.factor_effects[1]
    }
}

fn fit_counterfactual_inner(
    table: &ObservationTable,
    view: &TreatmentView,
    allow_partial: bool,
) -> Result<CounterfactualModel> {
    let untreated: Vec<usize> = (0..table.n_rows()).filter(|&r| !view.treated[r]).collect();
    if untreated.is_empty() {
        return Err(Error::NoControl);
    }
    let (group_comp, time_comp, n_comp) = untreated_components(table, view);
    if n_comp > 1 && !allow_partial {
        return Err(Error::DisconnectedDesign { components: n_comp });
    }
    let gcodes: Vec<u32> = untreated.iter().map(|&r| table.group.codes[r]).collect();
    let tcodes: Vec<u32> = untreated.iter().map(|&r| table.time_codes[r]).collect();
    let y: Vec<f64> = untreated.iter().map(|&r| table.outcome[r]).collect();
    let w: Vec<f64> = untreated.iter().map(|&r| table.weight[r]).collect();
    let covs: Vec<Vec<f64>> = (0..table.covariate_arity)
        .map(|j| untreated.iter().map(|&r| table.covariate_row(r)[j]).collect())
        .collect();
    let factors = [
        Factor::new("group", gcodes, table.group.levels.len()),
        Factor::new("time", tcodes, table.time_levels.len()),
    ];
    let fit = fit_absorbed(&factors, &covs, &table.covariate_names, &y, &w)?;
    let mut mask = alloc::vec![false; table.n_rows()];
    for &r in &untreated {
        mask[r] = true;
    }
    Ok(CounterfactualModel {
        fit,
        group_comp,
        time_comp,
        n_groups: table.group.levels.len(),
        n_times: table.time_levels.len(),
        covariate_arity: table.covariate_arity,
        untreated_mask: mask,
        n_components: n_comp,
    })
}

/// Fits the untreated-outcome model. Errors with `DisconnectedDesign` when
/// the untreated incidence graph over the table's group and time levels has
/// more than one component.
pub fn fit_counterfactual(
    table: &ObservationTable,
    view: &TreatmentView,
) -> Result<CounterfactualModel> {
    fit_counterfactual_inner(table, view, false)
}

/// Like [`fit_counterfactual`] but tolerates a disconnected design:
/// treated rows outside the untreated components are later reported
/// unidentified instead of aborting the fit.
pub fn fit_counterfactual_partial(
    table: &ObservationTable,
    view: &TreatmentView,
) -> Result<CounterfactualModel> {
    fit_counterfactual_inner(table, view, true)
}

/// One imputed effect: observed minus imputed outcome for a treated row.
#[derive(Debug, Clone)]
pub struct EffectRow {
    pub row: usize,
    pub effect: f64,
    pub horizon: i64,
    pub group: u32,
    pub weight: f64,
}

/// Per-treated-row effects plus the subgroup labels aggregations consume.
#[derive(Debug, Clone)]
pub struct EffectSet {
    pub effects: Vec<EffectRow>,
    /// Treated rows whose counterfactual is unidentified; excluded from
    /// every aggregate.
    pub unidentified: Vec<usize>,
    /// Subgroup codes aligned to `effects`.
    pub subgroups: BTreeMap<String, CategoricalColumn>,
}

impl EffectSet {
    pub fn n_identified(&self) -> usize {
        self.effects.len()
    }
}

/// Effect per identified treated row: outcome minus model prediction.
pub fn impute_effects(
    model: &CounterfactualModel,
    table: &ObservationTable,
    view: &TreatmentView,
) -> Result<EffectSet> {
    if model.n_groups != table.group.levels.len()
        || model.n_times != table.time_levels.len()
        || model.covariate_arity != table.covariate_arity
        || model.untreated_mask.len() != table.n_rows()
    {
        return Err(Error::SchemaMismatch);
    }
    let mut effects = Vec::new();
    let mut unidentified = Vec::new();
    let mut kept_rows = Vec::new();
    for row in 0..table.n_rows() {
        if !view.treated[row] {
            continue;
        }
        let g = table.group.codes[row];
        let t = table.time_codes[row];
        match model.predict(g, t, table.covariate_row(row)) {
            Some(pred) if pred.is_finite() => {
                effects.push(EffectRow {
                    row,
                    effect: table.outcome[row] - pred,
                    horizon: view.horizon[row].unwrap_or(0),
                    group: g,
                    weight: table.weight[row],
                });
                kept_rows.push(row);
            }
            _ => unidentified.push(row),
        }
    }
    let subgroups = table
        .subgroups
        .iter()
        .map(|(label, col)| {
            (
                label.clone(),
                CategoricalColumn {
                    codes: kept_rows.iter().map(|&r| col.codes[r]).collect(),
                    levels: col.levels.clone(),
                },
            )
        })
        .collect();
    Ok(EffectSet {
        effects,
        unidentified,
        subgroups,
    })
}

/// How per-row effects are averaged into the overall ATT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttWeighting {
    /// Observation-level: weighted mean over treated rows (default).
    #[default]
    Observation,
    /// Group-level: each group's mean effect enters with equal weight.
    GroupEqual,
}

/// Weighted average of the imputed effects.
pub fn att_overall(set: &EffectSet, weighting: AttWeighting) -> Result<f64> {
    if set.effects.is_empty() {
        return Err(Error::EmptyEffectSet);
    }
    match weighting {
        AttWeighting::Observation => {
            let sw: f64 = set.effects.iter().map(|e| e.weight).sum();
            Ok(set.effects.iter().map(|e| e.weight * e.effect).sum::<f64>() / sw)
        }
        AttWeighting::GroupEqual => {
            let mut by_group: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
            for e in &set.effects {
                let entry = by_group.entry(e.group).or_insert((0.0, 0.0));
                entry.0 += e.weight * e.effect;
                entry.1 += e.weight;
            }
            let means: Vec<f64> = by_group.values().map(|(s, w)| s / w).collect();
            Ok(means.iter().sum::<f64>() / means.len() as f64)
        }
    }
}

/// One event-study point.
#[derive(Debug, Clone)]
pub struct HorizonPoint {
    pub h: i64,
    pub att: f64,
    pub n: usize,
    /// Filled by the inference module when a bootstrap plan is supplied.
    pub se: Option<f64>,
}

/// Per-horizon ATTs for h in 0..=H; horizons with empty support are absent.
#[derive(Debug, Clone)]
pub struct EventStudyCurve {
    pub points: Vec<HorizonPoint>,
    /// Rows with h > H excluded from the curve.
    pub truncated: usize,
}

impl EventStudyCurve {
    pub fn at(&self, h: i64) -> Option<&HorizonPoint> {
        self.points.iter().find(|p| p.h == h)
    }
}

/// Default treatment horizon cap.
pub const DEFAULT_HORIZON: i64 = 15;

/// Per-horizon weighted means of the effects, truncated above `h_max`.
pub fn att_by_horizon(set: &EffectSet, h_max: i64) -> EventStudyCurve {
    let mut buckets: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    let mut truncated = 0;
    for e in &set.effects {
        if e.horizon > h_max {
            truncated += 1;
            continue;
        }
        let b = buckets.entry(e.horizon).or_insert((0.0, 0.0, 0));
        b.0 += e.weight * e.effect;
        b.1 += e.weight;
        b.2 += 1;
    }
    EventStudyCurve {
        points: buckets
            .into_iter()
            .map(|(h, (s, w, n))| HorizonPoint {
                h,
                att: s / w,
                n,
                se: None,
            })
            .collect(),
        truncated,
    }
}

/// Per-category ATT estimates for one subgroup label.
#[derive(Debug, Clone)]
pub struct SubgroupAtts {
    pub label: String,
    /// (category, weighted mean effect, identified row count).
    pub categories: Vec<(String, f64, usize)>,
}

impl SubgroupAtts {
    pub fn get(&self, category: &str) -> Option<f64> {
        self.categories
            .iter()
            .find(|(c, _, _)| c == category)
            .map(|(_, v, _)| *v)
    }

    /// Contrast estimate a - b.
    pub fn contrast(&self, a: &str, b: &str) -> Result<f64> {
        if self.categories.len() < 2 {
            return Err(Error::SingleCategory(self.label.clone()));
        }
        let va = self.get(a).ok_or_else(|| Error::UnknownLabel(String::from(a)))?;
        let vb = self.get(b).ok_or_else(|| Error::UnknownLabel(String::from(b)))?;
        Ok(va - vb)
    }
}

/// Weighted mean effect per category of `label`.
pub fn att_by_subgroup(set: &EffectSet, label: &str) -> Result<SubgroupAtts> {
    let col = set
        .subgroups
        .get(label)
        .ok_or_else(|| Error::UnknownLabel(String::from(label)))?;
    if set.effects.is_empty() {
        return Err(Error::EmptyEffectSet);
    }
    let mut sums: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for (e, &code) in set.effects.iter().zip(&col.codes) {
        if code == u32::MAX {
            continue;
        }
        let b = sums.entry(code).or_insert((0.0, 0.0, 0));
        b.0 += e.weight * e.effect;
        b.1 += e.weight;
        b.2 += 1;
    }
    Ok(SubgroupAtts {
        label: String::from(label),
        categories: sums
            .into_iter()
            .map(|(code, (s, w, n))| (col.levels[code as usize].clone(), s / w, n))
            .collect(),
    })
}

/// Full pipeline on a table: derive treatment, fit the untreated model,
/// impute, and average. The unit every bootstrap replication re-runs.
pub fn estimate_att(table: &ObservationTable, schedule: &AdoptionSchedule) -> Result<f64> {
    let view = derive_treatment(table, schedule)?;
    let model = fit_counterfactual(table, &view)?;
    let set = impute_effects(&model, table, &view)?;
    att_overall(&set, AttWeighting::Observation)
}

/// Re-runs the full pipeline on the subsample where `keep` is true.
/// Identical code path to the main estimate.
pub fn placebo(
    table: &ObservationTable,
    schedule: &AdoptionSchedule,
    keep: &[bool],
) -> Result<f64> {
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| keep[r]).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sub = table.select(&rows);
    let view = derive_treatment(&sub, schedule)?;
    if view.n_treated() == 0 {
        return Err(Error::NoTreatedKept);
    }
    let model = fit_counterfactual(&sub, &view)?;
    let set = impute_effects(&model, &sub, &view)?;
    att_overall(&set, AttWeighting::Observation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{tiny_2x2, tiny_schedule};
    use crate::data::{build_table, ObservationRecord};
    use crate::rng::CounterRng;

    fn tiny_pipeline() -> (ObservationTable, TreatmentView, CounterfactualModel, EffectSet) {
        let t = tiny_2x2();
        let view = derive_treatment(&t, &tiny_schedule()).unwrap();
        let model = fit_counterfactual(&t, &view).unwrap();
        let set = impute_effects(&model, &t, &view).unwrap();
        (t, view, model, set)
    }

    #[test]
    fn tiny_model_effects() {
        let (_, _, model, _) = tiny_pipeline();
        // alpha_A = 1, alpha_B = 3, beta_2 - beta_1 = 1; prediction for (B,2) = 4
        let pred = model.predict(1, 1, &[]).unwrap();
        assert!((pred - 4.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_effect_is_double_difference() {
        let (_, _, _, set) = tiny_pipeline();
        assert_eq!(set.n_identified(), 1);
        // tau = 7 - 4 = 3 = (7-3) - (2-1)
        assert!((set.effects[0].effect - 3.0).abs() < 1e-10);
        assert!((att_overall(&set, AttWeighting::Observation).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn additive_law_gives_zero_untreated_residuals() {
        let mut records = Vec::new();
        for g in 0..3 {
            for t in 0..4 {
                let y = (g as f64) * 2.0 + (t as f64) * 0.5;
                records.push(ObservationRecord::new(
                    "u",
                    &alloc::format!("g{g}"),
                    t,
                    y,
                ));
            }
        }
        let table = build_table(&records).unwrap();
        let sched = AdoptionSchedule::new().adopt("g2", 3);
        let view = derive_treatment(&table, &sched).unwrap();
        let model = fit_counterfactual(&table, &view).unwrap();
        let set = impute_effects(&model, &table, &view).unwrap();
        for e in &set.effects {
            assert!(e.effect.abs() < 1e-9);
        }
    }

    #[test]
    fn fully_treated_group_disconnects() {
        // group S treated at every time, group C never treated
        let records = [
            ObservationRecord::new("u1", "S", 1, 5.0),
            ObservationRecord::new("u2", "S", 2, 6.0),
            ObservationRecord::new("u3", "C", 1, 1.0),
            ObservationRecord::new("u4", "C", 2, 2.0),
        ];
        let table = build_table(&records).unwrap();
        let sched = AdoptionSchedule::new().adopt("S", 1);
        let view = derive_treatment(&table, &sched).unwrap();
        assert!(matches!(
            fit_counterfactual(&table, &view),
            Err(Error::DisconnectedDesign { .. })
        ));
        // partial mode fits and marks S's rows unidentified
        let model = fit_counterfactual_partial(&table, &view).unwrap();
        let set = impute_effects(&model, &table, &view).unwrap();
        assert_eq!(set.n_identified(), 0);
        assert_eq!(set.unidentified.len(), 2);
    }

    #[test]
    fn per_row_effects_in_shared_cell() {
        // two treated rows in one cell with outcomes 5 and 9, imputation 4
        let records = [
            ObservationRecord::new("a1", "A", 1, 1.0),
            ObservationRecord::new("a2", "A", 2, 2.0),
            ObservationRecord::new("b1", "B", 1, 3.0),
            ObservationRecord::new("b2", "B", 2, 5.0),
            ObservationRecord::new("b3", "B", 2, 9.0),
        ];
        let table = build_table(&records).unwrap();
        let view = derive_treatment(&table, &tiny_schedule()).unwrap();
        let model = fit_counterfactual(&table, &view).unwrap();
        let set = impute_effects(&model, &table, &view).unwrap();
        let mut effs: Vec<f64> = set.effects.iter().map(|e| e.effect).collect();
        effs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((effs[0] - 1.0).abs() < 1e-9);
        assert!((effs[1] - 5.0).abs() < 1e-9);
        // equal weights -> mean 3
        assert!((att_overall(&set, AttWeighting::Observation).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn horizon_buckets() {
        let set = EffectSet {
            effects: alloc::vec![
                EffectRow { row: 0, effect: 1.0, horizon: 0, group: 0, weight: 1.0 },
                EffectRow { row: 1, effect: 2.0, horizon: 1, group: 0, weight: 1.0 },
                EffectRow { row: 2, effect: 4.0, horizon: 1, group: 0, weight: 1.0 },
            ],
            unidentified: Vec::new(),
            subgroups: BTreeMap::new(),
        };
        let curve = att_by_horizon(&set, 15);
        assert!((curve.at(0).unwrap().att - 1.0).abs() < 1e-12);
        assert!((curve.at(1).unwrap().att - 3.0).abs() < 1e-12);
        assert!(curve.at(2).is_none());
        assert_eq!(curve.truncated, 0);
        // support-weighted mean of curve equals overall ATT
        let total: f64 = curve.points.iter().map(|p| p.att * p.n as f64).sum();
        let n: usize = curve.points.iter().map(|p| p.n).sum();
        let overall = att_overall(&set, AttWeighting::Observation).unwrap();
        assert!((total / n as f64 - overall).abs() < 1e-12);
    }

    #[test]
    fn horizon_truncation_counts() {
        let set = EffectSet {
            effects: alloc::vec![
                EffectRow { row: 0, effect: 1.0, horizon: 0, group: 0, weight: 1.0 },
                EffectRow { row: 1, effect: 9.0, horizon: 20, group: 0, weight: 1.0 },
            ],
            unidentified: Vec::new(),
            subgroups: BTreeMap::new(),
        };
        let curve = att_by_horizon(&set, 15);
        assert_eq!(curve.truncated, 1);
        assert_eq!(curve.points.len(), 1);
    }

    #[test]
    fn subgroup_means_and_contrast() {
        let mut subgroups = BTreeMap::new();
        subgroups.insert(
            String::from("sex"),
            CategoricalColumn {
                codes: alloc::vec![0, 0, 1, 1],
                levels: alloc::vec![String::from("girl"), String::from("boy")],
            },
        );
        let set = EffectSet {
            effects: (0..4)
                .map(|i| EffectRow {
                    row: i,
                    effect: [2.0, 4.0, 1.0, 3.0][i],
                    horizon: 0,
                    group: 0,
                    weight: 1.0,
                })
                .collect(),
            unidentified: Vec::new(),
            subgroups,
        };
        let atts = att_by_subgroup(&set, "sex").unwrap();
        assert!((atts.get("girl").unwrap() - 3.0).abs() < 1e-12);
        assert!((atts.get("boy").unwrap() - 2.0).abs() < 1e-12);
        assert!((atts.contrast("girl", "boy").unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            att_by_subgroup(&set, "no_such_label"),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn shift_invariance_of_effects() {
        let mut rng = CounterRng::new(21, 0);
        let mut records = Vec::new();
        for g in 0..4 {
            for t in 0..5 {
                for u in 0..2 {
                    records.push(ObservationRecord::new(
                        &alloc::format!("u{g}{t}{u}"),
                        &alloc::format!("g{g}"),
                        t,
                        rng.next_normal(),
                    ));
                }
            }
        }
        let sched = AdoptionSchedule::new().adopt("g2", 3).adopt("g3", 4);
        let base = build_table(&records).unwrap();
        let view = derive_treatment(&base, &sched).unwrap();
        let model = fit_counterfactual(&base, &view).unwrap();
        let set = impute_effects(&model, &base, &view).unwrap();
        // add group- and time-specific constants
        let mut shifted = records.clone();
        for r in shifted.iter_mut() {
            let gshift = match r.group_id.as_str() {
                "g0" => 1.0,
                "g1" => -2.0,
                "g2" => 0.5,
                _ => 3.0,
            };
            r.outcome += gshift + 0.25 * r.time as f64;
        }
        let table2 = build_table(&shifted).unwrap();
        let view2 = derive_treatment(&table2, &sched).unwrap();
        let model2 = fit_counterfactual(&table2, &view2).unwrap();
        let set2 = impute_effects(&model2, &table2, &view2).unwrap();
        for (a, b) in set.effects.iter().zip(&set2.effects) {
            assert!((a.effect - b.effect).abs() < 1e-9);
        }
    }

    #[test]
    fn treated_rows_never_touch_the_fit() {
        let t = tiny_2x2();
        let view = derive_treatment(&t, &tiny_schedule()).unwrap();
        let m1 = fit_counterfactual(&t, &view).unwrap();
        let mut outcome = t.outcome.clone();
        outcome[3] = 1000.0;
        let t2 = t.with_outcome(outcome);
        let m2 = fit_counterfactual(&t2, &view).unwrap();
        for (a, b) in m1.group_effects().iter().zip(m2.group_effects()) {
            assert!(a == b || ((a - b).abs() < 1e-12));
        }
        for (a, b) in m1.time_effects().iter().zip(m2.time_effects()) {
            assert!(a == b || ((a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn placebo_identity_subsample_matches() {
        let t = tiny_2x2();
        let sched = tiny_schedule();
        let full = estimate_att(&t, &sched).unwrap();
        let keep = alloc::vec![true; 4];
        let p = placebo(&t, &sched, &keep).unwrap();
        assert!((full - p).abs() < 1e-12);
    }

    #[test]
    fn group_equal_weighting_switch() {
        // group 1 has two effects {1, 5}, group 2 one effect {2}
        let set = EffectSet {
            effects: alloc::vec![
                EffectRow { row: 0, effect: 1.0, horizon: 0, group: 1, weight: 1.0 },
                EffectRow { row: 1, effect: 5.0, horizon: 0, group: 1, weight: 1.0 },
                EffectRow { row: 2, effect: 2.0, horizon: 0, group: 2, weight: 1.0 },
            ],
            unidentified: Vec::new(),
            subgroups: BTreeMap::new(),
        };
        let obs = att_overall(&set, AttWeighting::Observation).unwrap();
        let grp = att_overall(&set, AttWeighting::GroupEqual).unwrap();
        assert!((obs - 8.0 / 3.0).abs() < 1e-12);
        assert!((grp - 2.5).abs() < 1e-12);
    }
}

