//! Property tests over randomly generated panels.

use proptest::prelude::*;

use stagdid_core::data::{build_table, derive_treatment, AdoptionSchedule, ObservationRecord};
use stagdid_core::imputation::{
    att_by_horizon, att_overall, fit_counterfactual, impute_effects, AttWeighting,
};
use stagdid_core::inference::{cluster_bootstrap, BootstrapPlan, Flavor};
use stagdid_core::regression::{fit_absorbed, fit_wls, Factor};
use stagdid_core::simulate::{generate, preset, TauSchedule};

/// Random additive panel: group effects, time effects, per-cell noise,
/// and a staggered adoption map over the first `n_treated` groups.
#[derive(Debug, Clone)]
struct Panel {
    n_groups: usize,
    n_times: i64,
    group_fx: Vec<f64>,
    time_fx: Vec<f64>,
    noise: Vec<f64>,
    adopt_offsets: Vec<i64>,
    tau: f64,
}

fn panel_strategy() -> impl Strategy<Value = Panel> {
    (3usize..7, 4i64..9).prop_flat_map(|(n_groups, n_times)| {
        let cells = n_groups * n_times as usize;
        (
            Just(n_groups),
            Just(n_times),
            prop::collection::vec(-5.0..5.0f64, n_groups),
            prop::collection::vec(-5.0..5.0f64, n_times as usize),
            prop::collection::vec(-1.0..1.0f64, cells),
            prop::collection::vec(2i64..6, n_groups.saturating_sub(2).max(1)),
            -3.0..3.0f64,
        )
            .prop_map(
                |(n_groups, n_times, group_fx, time_fx, noise, adopt_offsets, tau)| Panel {
                    n_groups,
                    n_times,
                    group_fx,
                    time_fx,
                    noise,
                    adopt_offsets,
                    tau,
                },
            )
    })
}

impl Panel {
    /// Builds records; with `clean_truth` the noise is dropped so the
    /// planted tau is exactly recoverable.
    fn records(&self, clean_truth: bool) -> (Vec<ObservationRecord>, AdoptionSchedule) {
        let mut schedule = AdoptionSchedule::new();
        for (g, off) in self.adopt_offsets.iter().enumerate() {
            schedule = schedule.adopt(&format!("g{g}"), *off);
        }
        let mut records = Vec::new();
        for g in 0..self.n_groups {
            let adopt = self.adopt_offsets.get(g).copied();
            for t in 0..self.n_times {
                let treated = adopt.map(|e| t >= e).unwrap_or(false);
                let mut y = self.group_fx[g] + self.time_fx[t as usize];
                if !clean_truth {
                    y += self.noise[g * self.n_times as usize + t as usize];
                }
                if treated {
                    y += self.tau;
                }
                records.push(ObservationRecord::new(
                    &format!("g{g}t{t}"),
                    &format!("g{g}"),
                    t,
                    y,
                ));
            }
        }
        (records, schedule)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Exact recovery of a planted constant effect under the additive law.
    #[test]
    fn planted_effect_recovered(panel in panel_strategy()) {
        let (records, schedule) = panel.records(true);
        let table = build_table(&records).unwrap();
        let view = derive_treatment(&table, &schedule).unwrap();
        if view.n_treated() == 0 {
            return Ok(());
        }
        let model = fit_counterfactual(&table, &view).unwrap();
        let set = impute_effects(&model, &table, &view).unwrap();
        let att = att_overall(&set, AttWeighting::Observation).unwrap();
        prop_assert!((att - panel.tau).abs() < 1e-8, "att {} tau {}", att, panel.tau);
    }

    /// Absorbed-FE fit agrees with explicit dummy expansion on the
    /// covariate coefficients and fitted values.
    #[test]
    fn absorbed_matches_dummy_expansion(panel in panel_strategy(), slope in -2.0..2.0f64) {
        let (records, _) = panel.records(false);
        let table = build_table(&records).unwrap();
        let n = table.n_rows();
        // a covariate correlated with nothing in particular
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| table.outcome[i] + slope * x[i]).collect();
        let w = vec![1.0; n];
        let factors = [
            Factor::new("group", table.group.codes.clone(), table.group.levels.len()),
            Factor::new("time", table.time_codes.clone(), table.time_levels.len()),
        ];
        let names = vec![String::from("x")];
        let absorbed = fit_absorbed(&factors, std::slice::from_ref(&x), &names, &y, &w).unwrap();
        let dummy = fit_wls(&factors, &[x], &names, &y, &w).unwrap();
        let dummy_slope = *dummy.coef.last().unwrap();
        prop_assert!((absorbed.coef[0] - dummy_slope).abs() < 1e-8);
        for (a, d) in absorbed.fitted.iter().zip(&dummy.fitted) {
            prop_assert!((a - d).abs() < 1e-8);
        }
    }

    /// Adding a constant to every outcome shifts predictions, not effects.
    #[test]
    fn att_invariant_to_outcome_shift(panel in panel_strategy(), shift in -100.0..100.0f64) {
        let (records, schedule) = panel.records(true);
        let table = build_table(&records).unwrap();
        let shifted = table.with_outcome(table.outcome.iter().map(|y| y + shift).collect());
        let view = derive_treatment(&table, &schedule).unwrap();
        if view.n_treated() == 0 {
            return Ok(());
        }
        let a = {
            let m = fit_counterfactual(&table, &view).unwrap();
            att_overall(&impute_effects(&m, &table, &view).unwrap(), AttWeighting::Observation).unwrap()
        };
        let b = {
            let m = fit_counterfactual(&shifted, &view).unwrap();
            att_overall(&impute_effects(&m, &shifted, &view).unwrap(), AttWeighting::Observation).unwrap()
        };
        prop_assert!((a - b).abs() < 1e-7);
    }

    /// Fitted + residual reproduces the outcome on every untreated row.
    #[test]
    fn decomposition_identity(panel in panel_strategy()) {
        let (records, schedule) = panel.records(false);
        let table = build_table(&records).unwrap();
        let view = derive_treatment(&table, &schedule).unwrap();
        let model = fit_counterfactual(&table, &view).unwrap();
        let mut u = 0;
        for row in 0..table.n_rows() {
            if !view.treated[row] {
                let sum = model.fit.fitted[u] + model.fit.residuals[u];
                prop_assert!((sum - table.outcome[row]).abs() < 1e-8);
                u += 1;
            }
        }
    }
}

/// The observation-weighted horizon curve averages back to the overall ATT.
#[test]
fn horizon_curve_aggregates_to_overall() {
    let mut cfg = preset("parallel", 11).unwrap();
    cfg.units_per_cell = 3;
    let (table, schedule, _) = generate(&cfg).unwrap();
    let view = derive_treatment(&table, &schedule).unwrap();
    let model = fit_counterfactual(&table, &view).unwrap();
    let set = impute_effects(&model, &table, &view).unwrap();
    let overall = att_overall(&set, AttWeighting::Observation).unwrap();
    let curve = att_by_horizon(&set, 32);
    let (mut num, mut den) = (0.0, 0usize);
    for p in &curve.points {
        num += p.att * p.n as f64;
        den += p.n;
    }
    assert_eq!(den, set.effects.len());
    assert!((num / den as f64 - overall).abs() < 1e-10);
}

/// Bootstrap replicates are bit-identical across runs with the same plan.
#[test]
fn bootstrap_is_deterministic() {
    let mut cfg = preset("parallel", 42).unwrap();
    cfg.units_per_cell = 2;
    cfg.tau = TauSchedule::Constant(1.0);
    let (table, schedule, _) = generate(&cfg).unwrap();
    let est = |t: &stagdid_core::ObservationTable| stagdid_core::imputation::estimate_att(t, &schedule);
    {
        let flavor = Flavor::PairsCluster;
        let plan = BootstrapPlan::new(99).with_iterations(50).with_flavor(flavor);
        let r1 = cluster_bootstrap(&table, &plan, None, &est).unwrap();
        let r2 = cluster_bootstrap(&table, &plan, None, &est).unwrap();
        assert_eq!(r1.replicates, r2.replicates);
        assert_eq!(r1.se, r2.se);
    }
}
