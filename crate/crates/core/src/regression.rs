//! Weighted least squares with categorical fixed-effect expansion, and an
//! equivalent absorption (within-transformation) path.
//!
//! The dummy path expands factors into indicator columns (first factor
//! keeps all levels, later factors drop their first-appearance reference
//! level) and solves by Householder QR with column pivoting. The absorbed
//! path alternates weighted demeaning over the factors and recovers the
//! per-level effects by back-substitution, so fitted values can be
//! extended to unseen (group, time) combinations for imputation.
//!
//! Individual fixed-effect values are normalization dependent; fitted
//! values on connected designs are not, and imputation consumes only
//! fitted values.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, SymMatrix};

/// Pivot tolerance, relative to the largest pivot.
pub const PIVOT_TOL: f64 = 1e-10;
/// Absorption stopping tolerance on cell-mean magnitude.
pub const ABSORB_TOL: f64 = 1e-13;
/// Absorption sweep cap.
pub const MAX_SWEEPS: usize = 10_000;

/// A categorical fixed-effect factor: dense level codes per row.
#[derive(Debug, Clone)]
pub struct Factor {
    pub name: String,
    pub codes: Vec<u32>,
    pub n_levels: usize,
}

impl Factor {
    pub fn new(name: &str, codes: Vec<u32>, n_levels: usize) -> Self {
        Factor {
            name: String::from(name),
            codes,
            n_levels,
        }
    }

    /// Interaction factor: one level per observed (a, b) level pair.
    pub fn interact(a: &Factor, b: &Factor) -> Factor {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let codes = a
            .codes
            .iter()
            .zip(&b.codes)
            .map(|(&x, &y)| match pairs.iter().position(|&p| p == (x, y)) {
                Some(i) => i as u32,
                None => {
                    pairs.push((x, y));
                    (pairs.len() - 1) as u32
                }
            })
            .collect();
        Factor {
            name: format!("{}x{}", a.name, b.name),
            codes,
            n_levels: pairs.len(),
        }
    }
}

/// Result of a weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Coefficients aligned to the expanded design (dropped columns -> 0).
    pub coef: Vec<f64>,
    pub names: Vec<String>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    /// Indices of columns dropped for collinearity.
    pub dropped: Vec<usize>,
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::AllZeroWeights);
    }
    Ok(())
}

/// Expands factors into dummy columns: the first factor contributes one
/// column per level, later factors drop level 0 (first appearance).
fn expand_design(
    factors: &[Factor],
    covariates: &[Vec<f64>],
    cov_names: &[String],
    n: usize,
) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (fi, f) in factors.iter().enumerate() {
        let start = if fi == 0 { 0 } else { 1 };
        for level in start..f.n_levels {
            let mut col = vec![0.0; n];
            for (row, &c) in f.codes.iter().enumerate() {
                if c as usize == level {
                    col[row] = 1.0;
                }
            }
            names.push(format!("{}[{}]", f.name, level));
            cols.push(col);
        }
    }
    for (j, c) in covariates.iter().enumerate() {
        cols.push(c.clone());
        names.push(
            cov_names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("x{j}")),
        );
    }
    (cols, names)
}

/// Householder QR with column pivoting on the sqrt-weighted design.
/// Returns coefficients (dropped -> 0), rank, and dropped column indices.
fn qr_solve(
    cols: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    tol: f64,
) -> (Vec<f64>, usize, Vec<usize>) {
    let n = y.len();
    let k = cols.len();
    let sw: Vec<f64> = w.iter().map(|&x| math::sqrt(x)).collect();
    // column-major working copy, weighted
    let mut a: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().zip(&sw).map(|(v, s)| v * s).collect())
        .collect();
    let mut b: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut rank = 0;
    let steps = k.min(n);
    let mut rdiag0 = 0.0;
    for j in 0..steps {
        // pivot: remaining column with the largest tail norm
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..k {
            let norm: f64 = a[c][j..].iter().map(|v| v * v).sum();
            if norm > best_norm {
                best_norm = norm;
                best = c;
            }
        }
        a.swap(j, best);
        perm.swap(j, best);
        let norm = math::sqrt(best_norm);
        if j == 0 {
            rdiag0 = norm;
        }
        if norm <= tol * rdiag0 || norm == 0.0 {
            break;
        }
        // Householder vector for column j
        let alpha = if a[j][j] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        a[j][j] = alpha;
        for t in j + 1..n {
            a[j][t] = 0.0;
        }
        if vnorm2 > 0.0 {
            for c in j + 1..k {
                let dot: f64 = v.iter().zip(&a[c][j..]).map(|(x, y)| x * y).sum();
                let s = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    a[c][j + t] -= s * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[j..]).map(|(x, y)| x * y).sum();
            let s = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                b[j + t] -= s * vi;
            }
        }
        rank += 1;
    }
    // back substitution on the rank x rank triangle
    let mut xq = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = b[i];
        for c in i + 1..rank {
            s -= a[c][i] * xq[c];
        }
        xq[i] = s / a[i][i];
    }
    let mut coef = vec![0.0; k];
    for i in 0..rank {
        coef[perm[i]] = xq[i];
    }
    let dropped: Vec<usize> = perm[rank..].to_vec();
    (coef, rank, dropped)
}

fn predict_cols(cols: &[Vec<f64>], coef: &[f64], n: usize) -> Vec<f64> {
    let mut fitted = vec![0.0; n];
    for (c, &b) in cols.iter().zip(coef) {
        if b != 0.0 {
            for (f, v) in fitted.iter_mut().zip(c) {
                *f += b * v;
            }
        }
    }
    fitted
}

/// WLS on the dummy-expanded design.
pub fn fit_wls(
    factors: &[Factor],
    covariates: &[Vec<f64>],
    cov_names: &[String],
    y: &[f64],
    w: &[f64],
) -> Result<FitResult> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_weights(w)?;
    let (cols, names) = expand_design(factors, covariates, cov_names, y.len());
    if cols.is_empty() {
        return Err(Error::DegenerateDesign);
    }
    let (coef, rank, mut dropped) = qr_solve(&cols, y, w, PIVOT_TOL);
    if rank == 0 {
        return Err(Error::DegenerateDesign);
    }
    dropped.sort_unstable();
    let fitted = predict_cols(&cols, &coef, y.len());
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(FitResult {
        coef,
        names,
        fitted,
        residuals,
        rank,
        dropped,
    })
}

/// Plain WLS on raw columns; the caller supplies any intercept column.
pub fn wls_columns(cols: &[Vec<f64>], names: &[String], y: &[f64], w: &[f64]) -> Result<FitResult> {
    fit_wls(&[], cols, names, y, w)
}

/// Covariance estimator for a [`fit_wls`]/[`wls_columns`] result.
pub enum CovKind<'a> {
    /// sigma^2 (X'WX)^-1 with sigma^2 = u'Wu / (n - rank).
    Homoskedastic,
    /// CR1 cluster-robust sandwich over the given cluster codes.
    ClusterRobust(&'a [u32]),
}

/// Covariance of the retained coefficients, indexed like the expanded
/// design (dropped rows/columns are zero). Requires the same design inputs
/// the fit was produced from.
pub fn wls_covariance(
    factors: &[Factor],
    covariates: &[Vec<f64>],
    fit: &FitResult,
    y: &[f64],
    w: &[f64],
    kind: CovKind<'_>,
) -> Vec<Vec<f64>> {
    let n = y.len();
    let (cols, _) = expand_design(factors, covariates, &[], n);
    let retained: Vec<usize> = (0..cols.len())
        .filter(|j| !fit.dropped.contains(j))
        .collect();
    let k = retained.len();
    let mut gram = SymMatrix::zeros(k);
    for (i, &ci) in retained.iter().enumerate() {
        for (j, &cj) in retained.iter().enumerate().skip(i) {
            let s: f64 = cols[ci]
                .iter()
                .zip(&cols[cj])
                .zip(w)
                .map(|((a, b), wt)| a * b * wt)
                .sum();
            gram.set(i, j, s);
            gram.set(j, i, s);
        }
    }
    let bread = invert_spd(&gram);
    let full_k = cols.len();
    let mut v = vec![vec![0.0; full_k]; full_k];
    match kind {
        CovKind::Homoskedastic => {
            let ssr: f64 = fit
                .residuals
                .iter()
                .zip(w)
                .map(|(u, wt)| u * u * wt)
                .sum();
            let dof = (n - fit.rank).max(1);
            let s2 = ssr / dof as f64;
            for i in 0..k {
                for j in 0..k {
                    v[retained[i]][retained[j]] = s2 * bread[i][j];
                }
            }
        }
        CovKind::ClusterRobust(clusters) => {
            let g = {
                let mut seen: Vec<u32> = clusters.to_vec();
                seen.sort_unstable();
                seen.dedup();
                seen.len()
            };
            let mut scores: alloc::collections::BTreeMap<u32, Vec<f64>> =
                alloc::collections::BTreeMap::new();
            for row in 0..n {
                let entry = scores
                    .entry(clusters[row])
                    .or_insert_with(|| vec![0.0; k]);
                let wu = w[row] * fit.residuals[row];
                for (i, &ci) in retained.iter().enumerate() {
                    entry[i] += cols[ci][row] * wu;
                }
            }
            let mut meat = vec![vec![0.0; k]; k];
            for s in scores.values() {
                for i in 0..k {
                    for j in 0..k {
                        meat[i][j] += s[i] * s[j];
                    }
                }
            }
            let c = if g > 1 && n > fit.rank {
                (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - fit.rank) as f64)
            } else {
                1.0
            };
            // bread * meat * bread
            for i in 0..k {
                for j in 0..k {
                    let mut s = 0.0;
                    for p in 0..k {
                        for q in 0..k {
                            s += bread[i][p] * meat[p][q] * bread[q][j];
                        }
                    }
                    v[retained[i]][retained[j]] = c * s;
                }
            }
        }
    }
    v
}

fn invert_spd(a: &SymMatrix) -> Vec<Vec<f64>> {
    let k = a.n;
    let mut inv = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        if let Some(col) = math::cholesky_solve(a, &e, 1e-14) {
            for i in 0..k {
                inv[i][j] = col[i];
            }
        }
    }
    inv
}

/// Absorbed (within-transformation) fit.
#[derive(Debug, Clone)]
pub struct AbsorbedFit {
    /// Covariate coefficients (dropped -> 0).
    pub coef: Vec<f64>,
    pub cov_names: Vec<String>,
    pub dropped: Vec<usize>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Per factor, per level additive effect; NaN for levels with no
    /// (positive-weight) support.
    pub factor_effects: Vec<Vec<f64>>,
    pub sweeps: usize,
}

impl AbsorbedFit {
    /// Additive prediction for a row with the given factor levels and
    /// covariates. None when any level has no support in the fit.
    pub fn predict(&self, levels: &[u32], covariates: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for (f, &l) in self.factor_effects.iter().zip(levels) {
            let e = *f.get(l as usize)?;
            if !e.is_finite() {
                return None;
            }
            total += e;
        }
        for (b, x) in self.coef.iter().zip(covariates) {
            total += b * x;
        }
        Some(total)
    }
}

fn demean_pass(
    col: &mut [f64],
    factors: &[Factor],
    w: &[f64],
    sums: &mut [Vec<f64>],
    wsums: &[Vec<f64>],
) -> f64 {
    let mut max_mean = 0.0_f64;
    for (fi, f) in factors.iter().enumerate() {
        for s in sums[fi].iter_mut() {
            *s = 0.0;
        }
        for (row, &c) in f.codes.iter().enumerate() {
            sums[fi][c as usize] += w[row] * col[row];
        }
        for (l, s) in sums[fi].iter_mut().enumerate() {
            let ws = wsums[fi][l];
            *s = if ws > 0.0 { *s / ws } else { 0.0 };
            max_mean = max_mean.max(math::abs(*s));
        }
        for (row, &c) in f.codes.iter().enumerate() {
            col[row] -= sums[fi][c as usize];
        }
    }
    max_mean
}

/// WLS with the factor fixed effects absorbed by alternating weighted
/// demeaning; per-level effects recovered by back-substitution.
pub fn fit_absorbed(
    factors: &[Factor],
    covariates: &[Vec<f64>],
    cov_names: &[String],
    y: &[f64],
    w: &[f64],
) -> Result<AbsorbedFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    check_weights(w)?;
    let mut wsums: Vec<Vec<f64>> = Vec::with_capacity(factors.len());
    for f in factors {
        let mut ws = vec![0.0; f.n_levels];
        for (row, &c) in f.codes.iter().enumerate() {
            ws[c as usize] += w[row];
        }
        wsums.push(ws);
    }
    let mut sums: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.n_levels]).collect();

    let scale = y.iter().fold(1.0_f64, |m, &v| m.max(math::abs(v)));
    let demean = |col: &[f64], sums: &mut [Vec<f64>], col_scale: f64| -> Result<(Vec<f64>, usize)> {
        let mut out = col.to_vec();
        let tol = ABSORB_TOL * col_scale.max(1.0);
        let mut sweeps = 0;
        loop {
            let max_mean = demean_pass(&mut out, factors, w, sums, &wsums);
            sweeps += 1;
            if max_mean < tol || factors.len() <= 1 {
                return Ok((out, sweeps));
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::NonConvergence {
                    achieved: max_mean,
                    sweeps,
                });
            }
        }
    };

    let (yd, mut total_sweeps) = demean(y, &mut sums, scale)?;
    let mut xd: Vec<Vec<f64>> = Vec::with_capacity(covariates.len());
    for c in covariates {
        let cs = c.iter().fold(1.0_f64, |m, &v| m.max(math::abs(v)));
        let (d, s) = demean(c, &mut sums, cs)?;
        total_sweeps = total_sweeps.max(s);
        xd.push(d);
    }

    // covariate coefficients on the demeaned system
    let (coef, dropped) = if covariates.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let (c, _rank, mut d) = qr_solve(&xd, &yd, w, PIVOT_TOL);
        d.sort_unstable();
        (c, d)
    };

    // back-substitute factor effects on r = y - X b
    let mut r: Vec<f64> = y.to_vec();
    for (c, &b) in covariates.iter().zip(&coef) {
        if b != 0.0 {
            for (ri, v) in r.iter_mut().zip(c) {
                *ri -= b * v;
            }
        }
    }
    let mut effects: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.n_levels]).collect();
    let mut remainder = r.clone();
    let tol = ABSORB_TOL * scale.max(1.0);
    let mut sweeps = 0;
    loop {
        let mut max_mean = 0.0_f64;
        for (fi, f) in factors.iter().enumerate() {
            for s in sums[fi].iter_mut() {
                *s = 0.0;
            }
            for (row, &c) in f.codes.iter().enumerate() {
                sums[fi][c as usize] += w[row] * remainder[row];
            }
            for (l, s) in sums[fi].iter_mut().enumerate() {
                let ws = wsums[fi][l];
                *s = if ws > 0.0 { *s / ws } else { 0.0 };
                max_mean = max_mean.max(math::abs(*s));
            }
            for (l, &m) in sums[fi].iter().enumerate() {
                effects[fi][l] += m;
            }
            for (row, &c) in f.codes.iter().enumerate() {
                remainder[row] -= sums[fi][c as usize];
            }
        }
        sweeps += 1;
        if max_mean < tol || factors.len() <= 1 {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence {
                achieved: max_mean,
                sweeps,
            });
        }
    }
    total_sweeps = total_sweeps.max(sweeps);
    // levels without support carry no information
    for (fi, f) in factors.iter().enumerate() {
        for l in 0..f.n_levels {
            if wsums[fi][l] == 0.0 {
                effects[fi][l] = f64::NAN;
            }
        }
    }
    let fitted: Vec<f64> = y.iter().zip(&remainder).map(|(a, b)| a - b).collect();
    Ok(AbsorbedFit {
        coef,
        cov_names: cov_names.to_vec(),
        dropped,
        fitted,
        residuals: remainder,
        factor_effects: effects,
        sweeps: total_sweeps,
    })
}
