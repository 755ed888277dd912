//! Synthetic staggered-adoption panel generator with known ground truth.
//!
//! Outcomes follow the additive law: group effect + time effect + true
//! effect on treated rows + optional violation terms + noise. Everything
//! is deterministic given the seed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{build_table, AdoptionSchedule, ObservationRecord, ObservationTable};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// True effect as a function of horizon h >= 0.
#[derive(Debug, Clone, Copy)]
pub enum TauSchedule {
    Constant(f64),
    /// base + slope * h, e.g. 0.1 * (h + 1) = base 0.1, slope 0.1.
    Linear { base: f64, slope: f64 },
    /// scale * (h + 1)^2.
    Quadratic { scale: f64 },
}

impl TauSchedule {
    pub fn at(&self, h: i64) -> f64 {
        let hf = h as f64;
        match self {
            TauSchedule::Constant(c) => *c,
            TauSchedule::Linear { base, slope } => base + slope * hf,
            TauSchedule::Quadratic { scale } => scale * (hf + 1.0) * (hf + 1.0),
        }
    }
}

/// Group adoption assignment.
#[derive(Debug, Clone)]
pub enum AdoptionAssignment {
    /// Per group index; None = never-treated.
    Fixed(Vec<Option<i64>>),
    /// Uniform over the inclusive window, with the given share of groups
    /// never treated (rounded down, at least one unless zero share).
    Random { window: (i64, i64), never_share: f64 },
}

/// Subgroup label with per-category effect multipliers, assigned to rows
/// by rotation within each cell.
#[derive(Debug, Clone)]
pub struct SubgroupSpec {
    pub label: String,
    pub categories: Vec<String>,
    pub multipliers: Vec<f64>,
}

/// Synthetic-panel recipe.
#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub n_groups: usize,
    /// Inclusive period span.
    pub periods: (i64, i64),
    pub units_per_cell: usize,
    pub adoption: AdoptionAssignment,
    pub tau: TauSchedule,
    /// Cohort heterogeneity: effect multiplier = cohort_scale * (E - cohort_ref)
    /// for adopting cohorts; 0 disables (multiplier 1).
    pub cohort_scale: f64,
    pub cohort_ref: i64,
    pub group_effect_sd: f64,
    pub time_effect_sd: f64,
    /// Differential linear trend added to ever-treated groups (violation knob).
    pub pre_trend_slope: f64,
    /// Effects begin this many periods before formal adoption.
    pub anticipation: i64,
    /// Planted lead coefficient: adds `value` at t = E + p (p negative).
    pub planted_lead: Option<(i64, f64)>,
    pub noise_sd: f64,
    pub subgroup: Option<SubgroupSpec>,
    pub clusters_per_group: usize,
    pub seed: u64,
}

impl DgpConfig {
    fn base(seed: u64) -> Self {
        DgpConfig {
            n_groups: 20,
            periods: (1, 15),
            units_per_cell: 4,
            adoption: AdoptionAssignment::Fixed(staggered_map(20, 14, 8, 6)),
            tau: TauSchedule::Linear { base: 0.1, slope: 0.1 },
            cohort_scale: 0.0,
            cohort_ref: 0,
            group_effect_sd: 1.0,
            time_effect_sd: 1.0,
            pre_trend_slope: 0.0,
            anticipation: 0,
            planted_lead: None,
            noise_sd: 1.0,
            subgroup: None,
            clusters_per_group: 1,
            seed,
        }
    }
}

/// Deterministic staggered assignment: the first `n_treated` groups adopt
/// at `start + (g mod span)`, the rest never.
pub fn staggered_map(
    n_groups: usize,
    n_treated: usize,
    start: i64,
    span: i64,
) -> Vec<Option<i64>> {
    (0..n_groups)
        .map(|g| {
            if g < n_treated {
                Some(start + (g as i64 % span))
            } else {
                None
            }
        })
        .collect()
}

/// Realized effects and estimands embedded in a generated panel.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub group_effects: Vec<f64>,
    /// Keyed by period.
    pub time_effects: BTreeMap<i64, f64>,
    /// True effect per row (0 where untreated).
    pub row_effect: Vec<f64>,
    /// Rows where the effect applies (time >= E - anticipation).
    pub row_treated: Vec<bool>,
    /// Equally-weighted mean of per-row effects over treated rows.
    pub att_overall: f64,
    /// True per-horizon means (horizon relative to the effective switch).
    pub horizon_curve: BTreeMap<i64, f64>,
    /// No never/not-yet-treated control exists.
    pub under_identified: bool,
}

/// Generates a panel, its adoption schedule (anticipation 0; the caller
/// decides K at estimation time), and the embedded ground truth.
pub fn generate(config: &DgpConfig) -> Result<(ObservationTable, AdoptionSchedule, GroundTruth)> {
    let (t_lo, t_hi) = config.periods;
    if config.n_groups < 2 {
        return Err(Error::InvalidConfig(String::from("need at least 2 groups")));
    }
    if t_lo > t_hi {
        return Err(Error::InvalidConfig(String::from("empty period span")));
    }
    if config.units_per_cell == 0 {
        return Err(Error::InvalidConfig(String::from("units_per_cell must be positive")));
    }
    if config.noise_sd < 0.0 || config.group_effect_sd < 0.0 || config.time_effect_sd < 0.0 {
        return Err(Error::InvalidConfig(String::from("negative scale")));
    }
    if let Some(sg) = &config.subgroup {
        if sg.categories.is_empty() || sg.categories.len() != sg.multipliers.len() {
            return Err(Error::InvalidConfig(String::from(
                "subgroup categories and multipliers must align",
            )));
        }
    }
    let n_periods = (t_hi - t_lo + 1) as usize;

    let adoption: Vec<Option<i64>> = match &config.adoption {
        AdoptionAssignment::Fixed(map) => {
            if map.len() != config.n_groups {
                return Err(Error::InvalidConfig(String::from(
                    "fixed adoption map length must equal group count",
                )));
            }
            map.clone()
        }
        AdoptionAssignment::Random { window, never_share } => {
            if !(0.0..=1.0).contains(never_share) {
                return Err(Error::InvalidConfig(String::from("never_share outside [0,1]")));
            }
            let mut rng = CounterRng::new(config.seed, 2);
            let n_never = ((config.n_groups as f64) * never_share) as usize;
            // shuffle group order, last n_never stay never-treated
            let mut order: Vec<usize> = (0..config.n_groups).collect();
            for i in (1..order.len()).rev() {
                let j = rng.next_range((i + 1) as u64) as usize;
                order.swap(i, j);
            }
            let mut map = alloc::vec![None; config.n_groups];
            for &g in order.iter().take(config.n_groups - n_never) {
                let span = (window.1 - window.0 + 1) as u64;
                map[g] = Some(window.0 + rng.next_range(span) as i64);
            }
            map
        }
    };
    // a control must exist: never-treated or adoption beyond the window
    let under_identified = adoption
        .iter()
        .all(|a| matches!(a, Some(e) if *e - config.anticipation <= t_lo));

    let mut group_rng = CounterRng::new(config.seed, 0);
    let group_effects: Vec<f64> = (0..config.n_groups)
        .map(|_| config.group_effect_sd * group_rng.next_normal())
        .collect();
    let mut time_rng = CounterRng::new(config.seed, 1);
    let time_effects: BTreeMap<i64, f64> = (t_lo..=t_hi)
        .map(|t| (t, config.time_effect_sd * time_rng.next_normal()))
        .collect();
    let mut noise_rng = CounterRng::new(config.seed, 3);

    let n_rows = config.n_groups * n_periods * config.units_per_cell;
    let mut records = Vec::with_capacity(n_rows);
    let mut row_effect = Vec::with_capacity(n_rows);
    let mut row_treated = Vec::with_capacity(n_rows);
    let mut schedule = AdoptionSchedule::new();
    for (g, &adopt) in adoption.iter().enumerate() {
        let gname = alloc::format!("g{g}");
        if let Some(e) = adopt {
            schedule = schedule.adopt(&gname, e);
        }
        let cohort_mult = match adopt {
            Some(e) if config.cohort_scale != 0.0 => {
                config.cohort_scale * (e - config.cohort_ref) as f64
            }
            _ => 1.0,
        };
        for t in t_lo..=t_hi {
            for u in 0..config.units_per_cell {
                let mut y = group_effects[g] + time_effects[&t];
                if adopt.is_some() {
                    y += config.pre_trend_slope * t as f64;
                }
                let mut effect = 0.0;
                if let Some(e) = adopt {
                    let h = t - (e - config.anticipation);
                    if h >= 0 {
                        effect = config.tau.at(h) * cohort_mult;
                        if let Some(sg) = &config.subgroup {
                            effect *= sg.multipliers[u % sg.categories.len()];
                        }
                    }
                    if let Some((p, v)) = config.planted_lead {
                        if t - e == p {
                            y += v;
                        }
                    }
                }
                y += effect + config.noise_sd * noise_rng.next_normal();
                let mut rec = ObservationRecord::new(
                    &alloc::format!("g{g}t{t}u{u}"),
                    &gname,
                    t,
                    y,
                );
                if config.clusters_per_group > 1 {
                    rec.cluster_id = Some(alloc::format!("g{g}c{}", u % config.clusters_per_group));
                }
                if let Some(sg) = &config.subgroup {
                    rec.subgroups.insert(
                        sg.label.clone(),
                        sg.categories[u % sg.categories.len()].clone(),
                    );
                }
                records.push(rec);
                row_effect.push(effect);
                row_treated.push(adopt.map(|e| t >= e - config.anticipation).unwrap_or(false));
            }
        }
    }
    let table = build_table(&records)?;

    let mut att_sum = 0.0;
    let mut att_n = 0usize;
    let mut horizon_sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (row, rec) in records.iter().enumerate() {
        if row_treated[row] {
            att_sum += row_effect[row];
            att_n += 1;
            let e = schedule.adoption_year(&rec.group_id).unwrap();
            let h = rec.time - (e - config.anticipation);
            let b = horizon_sums.entry(h).or_insert((0.0, 0));
            b.0 += row_effect[row];
            b.1 += 1;
        }
    }
    let truth = GroundTruth {
        group_effects,
        time_effects,
        row_effect,
        row_treated,
        att_overall: if att_n > 0 { att_sum / att_n as f64 } else { 0.0 },
        horizon_curve: horizon_sums
            .into_iter()
            .map(|(h, (s, n))| (h, s / n as f64))
            .collect(),
        under_identified,
    };
    Ok((table, schedule, truth))
}

/// Named scenario presets.
pub fn preset(name: &str, seed: u64) -> Result<DgpConfig> {
    let cfg = match name {
        // 20 groups x 15 periods, adoption 8..13 (6 never), tau(h)=0.1(h+1),
        // unit noise; all violation knobs zero.
        "parallel" => DgpConfig {
            units_per_cell: 12,
            ..DgpConfig::base(seed)
        },
        // tau = 0 with a 0.05-per-period differential trend in the
        // eventually-treated groups; longer panel so 8 leads have support.
        "trend_violation" => DgpConfig {
            periods: (1, 20),
            units_per_cell: 12,
            adoption: AdoptionAssignment::Fixed(staggered_map(20, 14, 10, 8)),
            tau: TauSchedule::Constant(0.0),
            pre_trend_slope: 0.05,
            ..DgpConfig::base(seed)
        },
        // later-adopting cohorts get much larger, horizon-growing effects:
        // the regime where static TWFE misweights.
        "cohort_heterogeneous" => DgpConfig {
            adoption: AdoptionAssignment::Fixed(staggered_map(20, 14, 4, 9)),
            tau: TauSchedule::Quadratic { scale: 0.1 },
            cohort_scale: 0.2,
            cohort_ref: 3,
            ..DgpConfig::base(seed)
        },
        // effects begin 2 periods before formal adoption.
        "anticipation" => DgpConfig {
            anticipation: 2,
            ..DgpConfig::base(seed)
        },
        // only subgroup A is affected; B is a placebo population.
        "subgroup_effect" => DgpConfig {
            subgroup: Some(SubgroupSpec {
                label: String::from("arm"),
                categories: alloc::vec![String::from("A"), String::from("B")],
                multipliers: alloc::vec![1.0, 0.0],
            }),
            ..DgpConfig::base(seed)
        },
        other => return Err(Error::UnknownPreset(String::from(other))),
    };
    Ok(cfg)
}

/// All preset names, for CLI help and enumeration tests.
pub const PRESET_NAMES: [&str; 5] = [
    "parallel",
    "trend_violation",
    "cohort_heterogeneous",
    "anticipation",
    "subgroup_effect",
];
