//! Error type shared across the crate.

use alloc::string::String;

/// Errors raised by table construction, estimation, and inference.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: at least one record is required")]
    EmptyInput,
    #[error("ragged covariates: expected arity {expected}, found {found} at row {row}")]
    RaggedCovariates {
        expected: usize,
        found: usize,
        row: usize,
    },
    #[error("non-finite or invalid value in field `{field}` at row {row}")]
    NonFiniteValue { field: &'static str, row: usize },
    #[error("no untreated observations: the design is under-identified")]
    NoControl,
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("degenerate design: no columns retained")]
    DegenerateDesign,
    #[error("absorption did not converge: tolerance {achieved:e} after {sweeps} sweeps")]
    NonConvergence { achieved: f64, sweeps: usize },
    #[error("disconnected untreated design: {components} components")]
    DisconnectedDesign { components: usize },
    #[error("table schema does not match the fitted model")]
    SchemaMismatch,
    #[error("no identified treatment effects to aggregate")]
    EmptyEffectSet,
    #[error("unknown subgroup label `{0}`")]
    UnknownLabel(String),
    #[error("subgroup label `{0}` has a single category: contrast undefined")]
    SingleCategory(String),
    #[error("treatment interaction is collinear with the requested fixed effects")]
    CollinearInteraction,
    #[error("trend test requires at least two distinct years")]
    SingleYear,
    #[error("both treatment arms must be present")]
    MissingArm,
    #[error("all districts share the same adoption status")]
    DegenerateOutcome,
    #[error("cluster bootstrap requires at least two clusters")]
    SingleCluster,
    #[error("all bootstrap resamples were degenerate")]
    AllResamplesDegenerate,
    #[error("replicate vectors are not paired (lengths {0} and {1})")]
    UnpairedReplicates(usize, usize),
    #[error("wild bootstrap requires fitted values and residuals from a baseline fit")]
    MissingWildSource,
    #[error("column has zero variance")]
    ZeroVariance,
    #[error("input column `{0}` has zero variance")]
    ZeroVarianceColumn(String),
    #[error("too few complete-case rows: {found} (need at least {need})")]
    TooFewRows { found: usize, need: usize },
    #[error("reference table has no entry for (age {age}, sex `{sex}`)")]
    MissingReferenceKey { age: i64, sex: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("predicate keeps no treated rows")]
    NoTreatedKept,
    #[error("insufficient lead support: no lead dummy has any rows")]
    InsufficientLeadSupport,
}

pub type Result<T> = core::result::Result<T, Error>;
