//! Cluster bootstrap standard errors, confidence intervals, and paired
//! contrast tests.
//!
//! Replicate `b` draws all of its randomness from RNG stream `b` of the
//! plan's seed, so results are bit-identical across runs and independent
//! of execution order or thread count. The cli crate parallelizes by
//! calling [`replicate_vec`] per index and assembling in index order.

use alloc::vec::Vec;

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::CounterRng;

/// Resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Flavor {
    /// Resample whole clusters with replacement (resample size = cluster
    /// count). Default.
    #[default]
    PairsCluster,
    /// Multiply cluster-level residuals by Rademacher signs around a
    /// baseline fit.
    WildCluster,
}

/// Bootstrap configuration. `seed` fixed implies fully deterministic output.
#[derive(Debug, Clone)]
pub struct BootstrapPlan {
    pub iterations: u32,
    pub flavor: Flavor,
    pub seed: u64,
    /// Redraw attempts per iteration before the iteration is discarded.
    pub max_attempts: u32,
}

impl BootstrapPlan {
    pub fn new(seed: u64) -> Self {
        BootstrapPlan {
            iterations: 1000,
            flavor: Flavor::PairsCluster,
            seed,
            max_attempts: 100,
        }
    }

    pub fn with_iterations(mut self, b: u32) -> Self {
        self.iterations = b.max(1);
        self
    }

    pub fn with_flavor(mut self, f: Flavor) -> Self {
        self.flavor = f;
        self
    }
}

/// Baseline decomposition the wild flavor perturbs: outcome must equal
/// fitted + residuals rowwise.
#[derive(Debug, Clone)]
pub struct WildSource {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Scalar bootstrap output.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub point: f64,
    pub replicates: Vec<f64>,
    pub se: f64,
    pub ci_normal: (f64, f64),
    pub ci_percentile: (f64, f64),
    pub discarded: u32,
}

const Z975: f64 = 1.959963984540054;

/// One bootstrap replicate of a vector-valued estimator. Returns None when
/// every redraw attempt errored (degenerate resample).
pub fn replicate_vec<F>(
    table: &ObservationTable,
    plan: &BootstrapPlan,
    wild: Option<&WildSource>,
    clusters: &[Vec<usize>],
    estimator: &F,
    b: u64,
) -> Option<Vec<f64>>
where
    F: Fn(&ObservationTable) -> Result<Vec<f64>> + ?Sized,
{
    let k = clusters.len() as u64;
    for attempt in 0..plan.max_attempts as u64 {
        let mut rng = CounterRng::new(plan.seed, b * plan.max_attempts as u64 + attempt);
        let resampled = match plan.flavor {
            Flavor::PairsCluster => {
                let mut rows = Vec::new();
                for _ in 0..k {
                    let pick = rng.next_range(k) as usize;
                    rows.extend_from_slice(&clusters[pick]);
                }
                table.select(&rows)
            }
            Flavor::WildCluster => {
                let source = wild.expect("checked by caller");
                let mut y = source.fitted.clone();
                for cluster in clusters {
                    let s = rng.next_sign();
                    for &row in cluster {
                        y[row] += s * source.residuals[row];
                    }
                }
                table.with_outcome(y)
            }
        };
        if let Ok(v) = estimator(&resampled) {
            if v.iter().all(|x| x.is_finite()) {
                return Some(v);
            }
        }
    }
    None
}

/// Vector-valued cluster bootstrap: returns the replicate rows (paired by
/// iteration index) and the count of discarded iterations.
pub fn cluster_bootstrap_vec<F>(
    table: &ObservationTable,
    plan: &BootstrapPlan,
    wild: Option<&WildSource>,
    estimator: &F,
) -> Result<(Vec<Vec<f64>>, u32)>
where
    F: Fn(&ObservationTable) -> Result<Vec<f64>> + ?Sized,
{
    let clusters = table.rows_by_cluster();
    if clusters.len() < 2 {
        return Err(Error::SingleCluster);
    }
    if plan.flavor == Flavor::WildCluster && wild.is_none() {
        return Err(Error::MissingWildSource);
    }
    let mut replicates = Vec::with_capacity(plan.iterations as usize);
    let mut discarded = 0;
    for b in 0..plan.iterations as u64 {
        match replicate_vec(table, plan, wild, &clusters, estimator, b) {
            Some(v) => replicates.push(v),
            None => discarded += 1,
        }
    }
    if replicates.is_empty() {
        return Err(Error::AllResamplesDegenerate);
    }
    Ok((replicates, discarded))
}

/// Summarizes scalar replicates around a point estimate.
pub fn assemble(point: f64, replicates: Vec<f64>, discarded: u32) -> BootstrapResult {
    let se = math::sample_sd(&replicates);
    let mut sorted = replicates.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci_percentile = (math::quantile(&sorted, 0.025), math::quantile(&sorted, 0.975));
    BootstrapResult {
        point,
        se,
        ci_normal: (point - Z975 * se, point + Z975 * se),
        ci_percentile,
        replicates,
        discarded,
    }
}

/// Scalar cluster bootstrap of `estimator` under `plan`.
pub fn cluster_bootstrap<F>(
    table: &ObservationTable,
    plan: &BootstrapPlan,
    wild: Option<&WildSource>,
    estimator: &F,
) -> Result<BootstrapResult>
where
    F: Fn(&ObservationTable) -> Result<f64> + ?Sized,
{
    let point = estimator(table)?;
    let vec_est = |t: &ObservationTable| estimator(t).map(|v| alloc::vec![v]);
    let (reps, discarded) = cluster_bootstrap_vec(table, plan, wild, &vec_est)?;
    let replicates: Vec<f64> = reps.into_iter().map(|v| v[0]).collect();
    Ok(assemble(point, replicates, discarded))
}

/// Covariance matrix of paired vector replicates (n-1 denominator).
pub fn replicate_covariance(replicates: &[Vec<f64>]) -> crate::math::SymMatrix {
    let k = replicates.first().map(|v| v.len()).unwrap_or(0);
    let n = replicates.len();
    let mut mean = alloc::vec![0.0; k];
    for r in replicates {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = crate::math::SymMatrix::zeros(k);
    for r in replicates {
        for i in 0..k {
            for j in i..k {
                let v = cov.get(i, j) + (r[i] - mean[i]) * (r[j] - mean[j]);
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
    }
    if n > 1 {
        for v in cov.data.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    cov
}

/// Paired contrast test: point_a - point_b with SE from the per-iteration
/// replicate differences and a two-sided normal p-value.
#[derive(Debug, Clone)]
pub struct Contrast {
    pub diff: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    /// SE was zero; p reported as 0 (or 1 when the diff is also zero).
    pub degenerate_se: bool,
}

pub fn contrast_test(
    replicates_a: &[f64],
    replicates_b: &[f64],
    point_a: f64,
    point_b: f64,
) -> Result<Contrast> {
    if replicates_a.len() != replicates_b.len() {
        return Err(Error::UnpairedReplicates(
            replicates_a.len(),
            replicates_b.len(),
        ));
    }
    let diffs: Vec<f64> = replicates_a
        .iter()
        .zip(replicates_b)
        .map(|(a, b)| a - b)
        .collect();
    let diff = point_a - point_b;
    let se = math::sample_sd(&diffs);
    if se == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Ok(Contrast {
            diff,
            se,
            z: 0.0,
            p,
            degenerate_se: true,
        });
    }
    let z = diff / se;
    Ok(Contrast {
        diff,
        se,
        z,
        p: math::normal_two_sided_p(z),
        degenerate_se: false,
    })
}
