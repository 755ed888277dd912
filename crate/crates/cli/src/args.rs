//! Command-line surface: one subcommand per analysis, shared flag groups
//! for input bindings and bootstrap control. A `--config FILE` holding one
//! `key value` pair per line is expanded into flags before parsing; flags
//! given on the command line win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "stagdid", version, about = "Staggered-adoption DiD imputation estimator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Imputation ATT with horizon curve and subgroup breakdowns.
    Estimate(EstimateArgs),
    /// Pre-trend lead coefficients and the joint chi-square test.
    Pretrend(PretrendArgs),
    /// Conventional static two-way fixed-effects comparison.
    Twfe(TwfeArgs),
    /// Common pre-period trend test between eventual arms.
    TrendTest(TrendTestArgs),
    /// Selection-on-baseline linear probability test (district level).
    SelectionTest(SelectionTestArgs),
    /// Re-estimate on a kept subsample (`--keep label=value`).
    Placebo(PlaceboArgs),
    /// First-principal-component composite index over chosen columns.
    Index(IndexArgs),
    /// Generate a synthetic panel from a named preset.
    Simulate(SimulateArgs),
}

/// CSV input path and column bindings.
#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Input CSV (header required).
    #[arg(long)]
    pub input: PathBuf,
    /// Outcome column.
    #[arg(long, default_value = "outcome")]
    pub outcome: String,
    /// Group (treatment-assignment unit) column.
    #[arg(long, default_value = "group_id")]
    pub group: String,
    /// Integer time-period column.
    #[arg(long, default_value = "time")]
    pub time: String,
    /// Adoption-year column; blank cells mean never-treated.
    #[arg(long, default_value = "adoption_year")]
    pub adoption: String,
    /// Unit identifier column.
    #[arg(long, default_value = "unit_id")]
    pub unit: String,
    /// Cluster column; defaults to `cluster_id` when present, else group.
    #[arg(long)]
    pub cluster: Option<String>,
    /// Weight column; defaults to `weight` when present, else 1.
    #[arg(long)]
    pub weight: Option<String>,
    /// Covariate columns (comma-separated); default: every `x_*` column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Subgroup columns (comma-separated); default: every `g_*` column.
    #[arg(long, value_delimiter = ',')]
    pub subgroups: Option<Vec<String>>,
    /// Anticipation shift K: treatment switches at E - K.
    #[arg(long, default_value_t = 0)]
    pub anticipation: i64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlavorArg {
    Pairs,
    Wild,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingArg {
    /// Average over treated observations (default).
    Observation,
    /// Equal weight per group, then average.
    Group,
}

/// Bootstrap plan flags. `--seed` is mandatory whenever iterations > 0:
/// there is no hidden entropy source.
#[derive(Args, Debug, Clone)]
pub struct BootstrapArgs {
    /// Bootstrap iterations; 0 disables inference.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: u32,
    #[arg(long, value_enum, default_value_t = FlavorArg::Pairs)]
    pub flavor: FlavorArg,
    /// RNG seed; required when bootstrap > 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replicate evaluation.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Horizon cap H for the event-study curve.
    #[arg(long, default_value_t = 15)]
    pub horizon: i64,
    #[arg(long, value_enum, default_value_t = WeightingArg::Observation)]
    pub weighting: WeightingArg,
    /// JSON result path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Plot-ready event-study CSV path.
    #[arg(long)]
    pub event_study: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadCovArg {
    Bootstrap,
    Cluster,
    Ols,
}

#[derive(Args, Debug)]
pub struct PretrendArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Number of leads P (coefficients at -P..-1).
    #[arg(long, default_value_t = 8)]
    pub leads: usize,
    /// Lead covariance estimator.
    #[arg(long, value_enum, default_value_t = LeadCovArg::Bootstrap)]
    pub lead_cov: LeadCovArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub event_study: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TwfeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Subgroup labels interacted with the treatment indicator.
    #[arg(long, value_delimiter = ',')]
    pub interact: Option<Vec<String>>,
    /// Add group x time fixed effects (needs within-cell variation).
    #[arg(long)]
    pub group_time_fe: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrendTestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Last pre-period year included in the trend regression.
    #[arg(long)]
    pub cutoff: i64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelectionTestArgs {
    /// District-level CSV: one row per district.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "district")]
    pub district: String,
    /// 0/1 adoption indicator column.
    #[arg(long, default_value = "adopted")]
    pub adopted: String,
    /// Baseline (pre-reform) outcome column.
    #[arg(long, default_value = "outcome")]
    pub outcome: String,
    /// Control columns; default: every `x_*` column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlaceboArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Subsample predicate, e.g. `--keep arm=B`.
    #[arg(long)]
    pub keep: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Columns entering the index (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Copy of the input with a `pc1` score column appended.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Preset: parallel | trend_violation | cohort_heterogeneous |
    /// anticipation | subgroup_effect.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub seed: u64,
    /// Output panel CSV in the standard ingestion schema.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the preset's units per group x time cell.
    #[arg(long)]
    pub units_per_cell: Option<usize>,
    /// Override the preset's noise SD.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Ground-truth JSON path.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}
