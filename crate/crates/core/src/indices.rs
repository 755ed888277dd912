//! Composite-index construction (first principal component of standardized
//! inputs, normalized to mean 0 / SD 1) and reference-table z-scores.
//!
//! SD convention is population (divide by n) throughout this module.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, SymMatrix};

fn population_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

/// (x - mean) / SD with the population SD convention.
pub fn standardize(column: &[f64]) -> Result<Vec<f64>> {
    if column.len() < 2 {
        return Err(Error::TooFewRows {
            found: column.len(),
            need: 2,
        });
    }
    let (mean, sd) = population_mean_sd(column);
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(column.iter().map(|v| (v - mean) / sd).collect())
}

/// First-principal-component composite index.
#[derive(Debug, Clone)]
pub struct CompositeIndex {
    pub column_names: Vec<String>,
    /// Unit-norm loading vector over the standardized inputs.
    pub loadings: Vec<f64>,
    /// Per-row score, mean 0 / SD 1 over complete cases; None for rows
    /// with any missing (non-finite) input.
    pub scores: Vec<Option<f64>>,
    pub n_complete: usize,
    pub n_incomplete: usize,
    /// Share of input variance carried by the first component.
    pub explained_share: f64,
}

/// PC1 of the correlation matrix of the input columns, scored over
/// complete-case rows and renormalized to mean 0 / SD 1. Orientation:
/// loadings sum > 0, ties broken by first loading > 0.
pub fn pc1_index(columns: &[Vec<f64>], names: &[String]) -> Result<CompositeIndex> {
    if columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_rows = columns[0].len();
    let k = columns.len();
    let complete: Vec<bool> = (0..n_rows)
        .map(|r| columns.iter().all(|c| c[r].is_finite()))
        .collect();
    let rows: Vec<usize> = (0..n_rows).filter(|&r| complete[r]).collect();
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            found: rows.len(),
            need: 2,
        });
    }
    // standardize over complete cases
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (j, c) in columns.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|&r| c[r]).collect();
        let (mean, sd) = population_mean_sd(&vals);
        if sd == 0.0 {
            return Err(Error::ZeroVarianceColumn(
                names.get(j).cloned().unwrap_or_else(|| alloc::format!("col{j}")),
            ));
        }
        z.push(vals.iter().map(|v| (v - mean) / sd).collect());
    }
    let m = rows.len() as f64;
    let mut corr = SymMatrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let s: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / m;
            corr.set(i, j, s);
            corr.set(j, i, s);
        }
    }
    let (vals, vecs) = math::jacobi_eigen(&corr);
    let top = (0..k)
        .max_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
        .unwrap();
    let mut loadings = vecs[top].clone();
    let norm = math::sqrt(loadings.iter().map(|v| v * v).sum::<f64>());
    for l in loadings.iter_mut() {
        *l /= norm;
    }
    let sum: f64 = loadings.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        loadings[0] < 0.0
    };
    if flip {
        for l in loadings.iter_mut() {
            *l = -*l;
        }
    }
    // raw scores then renormalize to mean 0 / SD 1
    let raw: Vec<f64> = (0..rows.len())
        .map(|i| loadings.iter().zip(&z).map(|(l, col)| l * col[i]).sum())
        .collect();
    let (rm, rsd) = population_mean_sd(&raw);
    if rsd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut scores = alloc::vec![None; n_rows];
    for (i, &r) in rows.iter().enumerate() {
        scores[r] = Some((raw[i] - rm) / rsd);
    }
    let explained_share = vals[top] / vals.iter().sum::<f64>();
    Ok(CompositeIndex {
        column_names: names.to_vec(),
        loadings,
        scores,
        n_complete: rows.len(),
        n_incomplete: n_rows - rows.len(),
        explained_share,
    })
}

/// Reference population moments keyed by (age bucket, sex).
#[derive(Debug, Clone, Default)]
pub struct ReferenceTable {
    entries: BTreeMap<(i64, String), (f64, f64)>,
}

impl ReferenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a (mean, sd) entry; sd must be positive.
    pub fn insert(&mut self, age: i64, sex: &str, mean: f64, sd: f64) -> Result<()> {
        if sd <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        self.entries.insert((age, String::from(sex)), (mean, sd));
        Ok(())
    }

    pub fn get(&self, age: i64, sex: &str) -> Option<(f64, f64)> {
        self.entries.get(&(age, String::from(sex))).copied()
    }
}

/// Z-scores against a reference table: (x - mean_ref) / sd_ref per row.
pub fn zscore_against(
    values: &[f64],
    ages: &[i64],
    sexes: &[String],
    reference: &ReferenceTable,
) -> Result<Vec<f64>> {
    values
        .iter()
        .zip(ages)
        .zip(sexes)
        .map(|((&v, &age), sex)| match reference.get(age, sex) {
            Some((mean, sd)) => Ok((v - mean) / sd),
            None => Err(Error::MissingReferenceKey {
                age,
                sex: sex.clone(),
            }),
        })
        .collect()
}
