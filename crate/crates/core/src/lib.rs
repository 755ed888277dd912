//! Staggered-adoption difference-in-differences estimation.
//!
//! The centerpiece is the imputation estimator: fit group and time fixed
//! effects on untreated observations only, impute untreated potential
//! outcomes for treated observations, and average the gaps. Around it sit
//! the diagnostics an applied study needs: pre-trend lead tests, placebo
//! re-estimation, conventional TWFE comparison regressions, common-trend
//! and selection falsifications, cluster bootstrap inference, and a
//! synthetic panel generator with known ground truth for validation.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the CLI
//! live in the companion `stagdid-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod imputation;
pub mod indices;
pub mod inference;
pub mod math;
pub mod pretrend;
pub mod regression;
pub mod rng;
pub mod simulate;
pub mod twfe;

pub use data::{
    build_table, derive_treatment, validate, AdoptionSchedule, ObservationRecord,
    ObservationTable, TreatmentView, ValidationReport,
};
pub use error::Error;
pub use imputation::{
    att_by_horizon, att_by_subgroup, att_overall, fit_counterfactual, impute_effects, placebo,
    AttWeighting, CounterfactualModel, EffectSet, EventStudyCurve,
};
pub use inference::{BootstrapPlan, BootstrapResult, Flavor};
