//! Pre-trend lead estimation on untreated observations and the
//! individual/joint significance tests of the parallel-trends assumption.
//!
//! The lead regression adds indicator variables for being treated 1..P
//! periods later to the group and time fixed effects, fitted over
//! untreated rows only. Untreated rows more than P periods before
//! adoption, and never-treated rows, form the reference set.

use alloc::vec::Vec;

use crate::data::{derive_treatment, AdoptionSchedule, ObservationTable};
use crate::error::{Error, Result};
use crate::inference::{cluster_bootstrap_vec, replicate_covariance, BootstrapPlan};
use crate::math::{self, SymMatrix};
use crate::regression::{fit_wls, wls_covariance, CovKind, Factor};

/// Default number of leads.
pub const DEFAULT_LEADS: usize = 8;

/// Covariance estimator for the lead vector.
#[derive(Debug, Clone)]
pub enum LeadCovariance {
    /// Cluster bootstrap of the lead regression (default; matches the main
    /// estimator's inference machinery).
    Bootstrap(BootstrapPlan),
    /// Analytic CR1 cluster-robust covariance.
    ClusterRobust,
    /// Homoskedastic OLS covariance.
    Ols,
}

/// One estimated lead coefficient.
#[derive(Debug, Clone)]
pub struct Lead {
    /// Relative position, negative: p in {-P..-1}.
    pub p: i64,
    pub gamma: f64,
    pub se: f64,
    pub t_stat: f64,
}

/// Lead coefficients with their covariance and the joint-test inputs.
#[derive(Debug, Clone)]
pub struct LeadProfile {
    pub leads: Vec<Lead>,
    /// Covariance over the retained leads, in `leads` order.
    pub cov: SymMatrix,
    /// Leads with no support, reported absent and excluded from the joint
    /// test (df adjusted).
    pub missing: Vec<i64>,
}

/// Joint Wald test of all retained leads being zero.
#[derive(Debug, Clone)]
pub struct JointTest {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    /// Covariance was singular; generalized inverse used with rank-adjusted df.
    pub pseudo_inverse: bool,
}

struct LeadRegression {
    gammas: Vec<f64>,
    factors: [Factor; 2],
    covariates: Vec<Vec<f64>>,
    fit: crate::regression::FitResult,
    y: Vec<f64>,
    w: Vec<f64>,
    clusters: Vec<u32>,
    n_factor_cols: usize,
}

/// Fits the lead regression over untreated rows. `retained` restricts the
/// lead set (used by bootstrap replicates to stay aligned); None retains
/// every lead with support.
fn lead_regression(
    table: &ObservationTable,
    schedule: &AdoptionSchedule,
    p_max: usize,
    retained: Option<&[i64]>,
) -> Result<(Vec<i64>, LeadRegression)> {
    let view = derive_treatment(table, schedule)?;
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| !view.treated[r]).collect();
    if rows.is_empty() {
        return Err(Error::NoControl);
    }
    // support per lead among untreated rows
    let lead_of = |r: usize| -> Option<i64> {
        match view.horizon[r] {
            Some(h) if h < 0 && h >= -(p_max as i64) => Some(h),
            _ => None,
        }
    };
    let with_support: Vec<i64> = (1..=p_max as i64)
        .map(|p| -p)
        .filter(|&p| rows.iter().any(|&r| lead_of(r) == Some(p)))
        .collect();
    let kept: Vec<i64> = match retained {
        Some(req) => {
            for p in req {
                if !with_support.contains(p) {
                    return Err(Error::InsufficientLeadSupport);
                }
            }
            req.to_vec()
        }
        None => with_support,
    };
    if kept.is_empty() {
        return Err(Error::InsufficientLeadSupport);
    }
    let gcodes: Vec<u32> = rows.iter().map(|&r| table.group.codes[r]).collect();
    let tcodes: Vec<u32> = rows.iter().map(|&r| table.time_codes[r]).collect();
    let y: Vec<f64> = rows.iter().map(|&r| table.outcome[r]).collect();
    let w: Vec<f64> = rows.iter().map(|&r| table.weight[r]).collect();
    let clusters: Vec<u32> = rows.iter().map(|&r| table.cluster.codes[r]).collect();
    let mut covariates: Vec<Vec<f64>> = kept
        .iter()
        .map(|&p| {
            rows.iter()
                .map(|&r| if lead_of(r) == Some(p) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut names: Vec<alloc::string::String> = kept
        .iter()
        .map(|p| alloc::format!("lead[{p}]"))
        .collect();
    for j in 0..table.covariate_arity {
        covariates.push(rows.iter().map(|&r| table.covariate_row(r)[j]).collect());
        names.push(table.covariate_names[j].clone());
    }
    let factors = [
        Factor::new("group", gcodes, table.group.levels.len()),
        Factor::new("time", tcodes, table.time_levels.len()),
    ];
    let n_factor_cols = table.group.levels.len() + table.time_levels.len() - 1;
    let fit = fit_wls(&factors, &covariates, &names, &y, &w)?;
    let gammas: Vec<f64> = (0..kept.len())
        .map(|i| fit.coef[n_factor_cols + i])
        .collect();
    Ok((
        kept,
        LeadRegression {
            gammas,
            factors,
            covariates,
            fit,
            y,
            w,
            clusters,
            n_factor_cols,
        },
    ))
}

/// Estimates the lead coefficients and their covariance.
pub fn fit_leads(
    table: &ObservationTable,
    schedule: &AdoptionSchedule,
    p_max: usize,
    covariance: &LeadCovariance,
) -> Result<LeadProfile> {
    let (kept, reg) = lead_regression(table, schedule, p_max, None)?;
    let missing: Vec<i64> = (1..=p_max as i64)
        .map(|p| -p)
        .filter(|p| !kept.contains(p))
        .collect();
    let k = kept.len();
    let cov: SymMatrix = match covariance {
        LeadCovariance::Bootstrap(plan) => {
            let kept_ref = kept.clone();
            let sched = schedule.clone();
            let estimator = move |t: &ObservationTable| -> Result<Vec<f64>> {
                lead_regression(t, &sched, p_max, Some(&kept_ref)).map(|(_, r)| r.gammas)
            };
            let (reps, _) = cluster_bootstrap_vec(table, plan, None, &estimator)?;
            replicate_covariance(&reps)
        }
        LeadCovariance::ClusterRobust | LeadCovariance::Ols => {
            let kind = match covariance {
                LeadCovariance::ClusterRobust => CovKind::ClusterRobust(&reg.clusters),
                _ => CovKind::Homoskedastic,
            };
            let full = wls_covariance(&reg.factors, &reg.covariates, &reg.fit, &reg.y, &reg.w, kind);
            let mut m = SymMatrix::zeros(k);
            for i in 0..k {
                for j in 0..k {
                    m.set(i, j, full[reg.n_factor_cols + i][reg.n_factor_cols + j]);
                }
            }
            m
        }
    };
    let leads: Vec<Lead> = kept
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let se = math::sqrt(cov.get(i, i).max(0.0));
            let gamma = reg.gammas[i];
            Lead {
                p,
                gamma,
                se,
                t_stat: if se > 0.0 { gamma / se } else { 0.0 },
            }
        })
        .collect();
    Ok(LeadProfile { leads, cov, missing })
}

/// Wald statistic gamma' V^-1 gamma against chi-square with df = retained
/// lead count (rank-adjusted under a singular covariance).
pub fn joint_test(profile: &LeadProfile) -> JointTest {
    let gamma: Vec<f64> = profile.leads.iter().map(|l| l.gamma).collect();
    let k = gamma.len();
    match math::cholesky_solve(&profile.cov, &gamma, 1e-12) {
        Some(x) => {
            let chi2: f64 = gamma.iter().zip(&x).map(|(a, b)| a * b).sum();
            JointTest {
                chi2,
                df: k,
                p_value: math::chi2_sf(chi2, k as f64),
                pseudo_inverse: false,
            }
        }
        None => {
            let (chi2, rank) = math::pinv_quadratic_form(&profile.cov, &gamma, 1e-12);
            JointTest {
                chi2,
                df: rank,
                p_value: math::chi2_sf(chi2, rank as f64),
                pseudo_inverse: true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_table, ObservationRecord};

    fn staggered_panel(effect_on_lead1: f64) -> (ObservationTable, AdoptionSchedule) {
        // 6 groups, times 1..12; groups 0..3 adopt at 9..12, 2 never
        let mut records = Vec::new();
        let mut sched = AdoptionSchedule::new();
        for g in 0..6 {
            let gname = alloc::format!("g{g}");
            let adopt = if g < 4 { Some(9 + g as i64) } else { None };
            if let Some(e) = adopt {
                sched = sched.adopt(&gname, e);
            }
            for t in 1..=12i64 {
                let mut y = (g as f64) * 0.7 + (t as f64) * 0.3;
                if let Some(e) = adopt {
                    if t - e == -1 {
                        y += effect_on_lead1;
                    }
                }
                records.push(ObservationRecord::new("u", &gname, t, y));
            }
        }
        (build_table(&records).unwrap(), sched)
    }

    #[test]
    fn additive_outcomes_give_zero_leads() {
        let (table, sched) = staggered_panel(0.0);
        let profile = fit_leads(&table, &sched, 4, &LeadCovariance::Ols).unwrap();
        for l in &profile.leads {
            assert!(l.gamma.abs() < 1e-8, "lead {} gamma {}", l.p, l.gamma);
        }
    }

    #[test]
    fn planted_lead_recovered() {
        let (table, sched) = staggered_panel(0.5);
        let profile = fit_leads(&table, &sched, 4, &LeadCovariance::Ols).unwrap();
        let l1 = profile.leads.iter().find(|l| l.p == -1).unwrap();
        assert!((l1.gamma - 0.5).abs() < 1e-8);
        for l in profile.leads.iter().filter(|l| l.p != -1) {
            assert!(l.gamma.abs() < 1e-8);
        }
    }

    #[test]
    fn single_lead_chi2() {
        let profile = LeadProfile {
            leads: alloc::vec![Lead { p: -1, gamma: 2.0, se: 1.0, t_stat: 2.0 }],
            cov: {
                let mut m = SymMatrix::zeros(1);
                m.set(0, 0, 1.0);
                m
            },
            missing: Vec::new(),
        };
        let jt = joint_test(&profile);
        assert!((jt.chi2 - 4.0).abs() < 1e-12);
        assert_eq!(jt.df, 1);
        assert!((jt.p_value - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn zero_gammas_give_p_one() {
        let mut cov = SymMatrix::zeros(2);
        cov.set(0, 0, 1.0);
        cov.set(1, 1, 1.0);
        let profile = LeadProfile {
            leads: alloc::vec![
                Lead { p: -1, gamma: 0.0, se: 1.0, t_stat: 0.0 },
                Lead { p: -2, gamma: 0.0, se: 1.0, t_stat: 0.0 },
            ],
            cov,
            missing: Vec::new(),
        };
        let jt = joint_test(&profile);
        assert_eq!(jt.chi2, 0.0);
        assert_eq!(jt.p_value, 1.0);
    }

    #[test]
    fn singular_covariance_uses_pseudo_inverse() {
        let mut cov = SymMatrix::zeros(2);
        cov.set(0, 0, 1.0);
        cov.set(0, 1, 1.0);
        cov.set(1, 0, 1.0);
        cov.set(1, 1, 1.0);
        let profile = LeadProfile {
            leads: alloc::vec![
                Lead { p: -1, gamma: 1.0, se: 1.0, t_stat: 1.0 },
                Lead { p: -2, gamma: 1.0, se: 1.0, t_stat: 1.0 },
            ],
            cov,
            missing: Vec::new(),
        };
        let jt = joint_test(&profile);
        assert!(jt.pseudo_inverse);
        assert_eq!(jt.df, 1);
        // gamma' V+ gamma with V = ones (rank 1): projection onto (1,1)/sqrt(2)
        assert!((jt.chi2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unsupported_leads_reported_missing() {
        // short panel: only lead -1 and -2 have support
        let (table, sched) = staggered_panel(0.0);
        let profile = fit_leads(&table, &sched, 8, &LeadCovariance::Ols).unwrap();
        let retained: Vec<i64> = profile.leads.iter().map(|l| l.p).collect();
        assert!(retained.len() + profile.missing.len() == 8);
        assert!(profile.missing.iter().all(|p| !retained.contains(p)));
    }

    #[test]
    fn treated_rows_do_not_matter() {
        let (table, sched) = staggered_panel(0.0);
        let view = derive_treatment(&table, &sched).unwrap();
        let mut outcome = table.outcome.clone();
        for (r, &t) in view.treated.iter().enumerate() {
            if t {
                outcome[r] += 99.0;
            }
        }
        let perturbed = table.with_outcome(outcome);
        let p1 = fit_leads(&table, &sched, 4, &LeadCovariance::Ols).unwrap();
        let p2 = fit_leads(&perturbed, &sched, 4, &LeadCovariance::Ols).unwrap();
        for (a, b) in p1.leads.iter().zip(&p2.leads) {
            assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
        }
    }

    #[test]
    fn bootstrap_covariance_runs() {
        let (table, sched) = staggered_panel(0.0);
        let plan = BootstrapPlan::new(5).with_iterations(30);
        let profile = fit_leads(&table, &sched, 3, &LeadCovariance::Bootstrap(plan)).unwrap();
        assert_eq!(profile.cov.n, profile.leads.len());
    }
}
