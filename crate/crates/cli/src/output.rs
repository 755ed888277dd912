//! JSON result shapes. Field order is fixed by the struct definitions and
//! maps use sorted keys, so identical runs produce byte-identical output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Serialize)]
pub struct HorizonJson {
    pub h: i64,
    pub att: f64,
    pub se: Option<f64>,
    pub n: usize,
}

/// Shared shape for estimate / placebo / twfe / trend-test / selection-test.
#[derive(Serialize)]
pub struct EstimateJson {
    pub estimator: &'static str,
    pub att: f64,
    pub se: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    pub n_treated: usize,
    pub n_unidentified: usize,
    pub horizons: Vec<HorizonJson>,
    pub subgroups: BTreeMap<String, BTreeMap<String, f64>>,
    pub seed: Option<u64>,
    pub bootstrap_iterations: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discarded_replicates: Option<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<InteractionJson>,
    pub config: serde_json::Value,
}

impl EstimateJson {
    /// Point-estimate-only skeleton; inference fields filled by the caller.
    pub fn new(estimator: &'static str, att: f64, config: serde_json::Value) -> Self {
        EstimateJson {
            estimator,
            att,
            se: None,
            ci95: None,
            n_treated: 0,
            n_unidentified: 0,
            horizons: Vec::new(),
            subgroups: BTreeMap::new(),
            seed: None,
            bootstrap_iterations: 0,
            discarded_replicates: None,
            interactions: Vec::new(),
            config,
        }
    }
}

#[derive(Serialize)]
pub struct InteractionJson {
    pub label: String,
    pub category: String,
    pub coefficient: f64,
}

#[derive(Serialize)]
pub struct LeadJson {
    pub p: i64,
    pub gamma: f64,
    pub se: f64,
    pub t_stat: f64,
}

#[derive(Serialize)]
pub struct PretrendJson {
    pub estimator: &'static str,
    pub leads: Vec<LeadJson>,
    /// Requested leads with no support, excluded from the joint test.
    pub missing: Vec<i64>,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub pseudo_inverse: bool,
    pub seed: Option<u64>,
    pub bootstrap_iterations: u32,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
pub struct IndexJson {
    pub estimator: &'static str,
    pub columns: Vec<String>,
    pub loadings: Vec<f64>,
    pub explained_share: f64,
    pub n_complete: usize,
    pub n_incomplete: usize,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
pub struct TruthJson {
    pub preset: String,
    pub seed: u64,
    pub att_overall: f64,
    pub horizons: Vec<HorizonJson>,
    pub under_identified: bool,
}

/// Pretty JSON to the path, or stdout when absent.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Usage(e.to_string())),
    }
}
