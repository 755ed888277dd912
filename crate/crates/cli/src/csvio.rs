//! CSV ingestion and emission.
//!
//! Ingestion schema: header required; bound columns per flags; covariates
//! default to every `x_*` column and subgroups to every `g_*` column, in
//! header order. Emitted numbers carry 12 significant digits so files
//! round-trip through any f64 parser.

use std::fs::File;
use std::path::Path;

use stagdid_core::data::{build_table, AdoptionSchedule, ObservationRecord, ObservationTable};
use stagdid_core::imputation::EventStudyCurve;
use stagdid_core::pretrend::LeadProfile;
use stagdid_core::twfe::DistrictRecord;

use crate::args::InputArgs;
use crate::error::{CliError, Result};

/// Decimal with 12 significant digits; parses back to within one ULP.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

struct Header {
    names: Vec<String>,
}

impl Header {
    fn require(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Usage(format!("column not in header: {name}")))
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Explicit list (all must exist) or every column with the prefix.
    fn bind_many(&self, explicit: &Option<Vec<String>>, prefix: &str) -> Result<Vec<usize>> {
        match explicit {
            Some(names) => names.iter().map(|n| self.require(n)).collect(),
            None => Ok((0..self.names.len())
                .filter(|&i| self.names[i].starts_with(prefix))
                .collect()),
        }
    }
}

fn read_header<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Header> {
    let names = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    Ok(Header { names })
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, line: u64, what: &str) -> Result<&'a str> {
    record
        .get(idx)
        .ok_or_else(|| CliError::Data(format!("line {line}: missing {what} field")))
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Data(format!("line {line}: {what} is not a number: {s:?}")))
}

fn parse_i64(s: &str, line: u64, what: &str) -> Result<i64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Data(format!("line {line}: {what} is not an integer: {s:?}")))
}

/// Reads a panel CSV into a table and the adoption schedule it encodes.
pub fn read_panel(args: &InputArgs) -> Result<(ObservationTable, AdoptionSchedule)> {
    let mut reader = open_reader(&args.input)?;
    let header = read_header(&mut reader)?;
    let unit = header.require(&args.unit)?;
    let group = header.require(&args.group)?;
    let time = header.require(&args.time)?;
    let adoption = header.require(&args.adoption)?;
    let outcome = header.require(&args.outcome)?;
    let cluster = match &args.cluster {
        Some(name) => Some(header.require(name)?),
        None => header.find("cluster_id"),
    };
    let weight = match &args.weight {
        Some(name) => Some(header.require(name)?),
        None => header.find("weight"),
    };
    let covariates = header.bind_many(&args.covariates, "x_")?;
    let subgroups = header.bind_many(&args.subgroups, "g_")?;

    let mut records = Vec::new();
    let mut schedule = AdoptionSchedule::new();
    let mut seen_adoption: std::collections::BTreeMap<String, Option<i64>> = Default::default();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let mut rec = ObservationRecord::new(
            field(&row, unit, line, "unit")?,
            field(&row, group, line, "group")?,
            parse_i64(field(&row, time, line, "time")?, line, "time")?,
            parse_f64(field(&row, outcome, line, "outcome")?, line, "outcome")?,
        );
        if let Some(c) = cluster {
            let v = field(&row, c, line, "cluster")?;
            if !v.trim().is_empty() {
                rec.cluster_id = Some(String::from(v.trim()));
            }
        }
        if let Some(w) = weight {
            rec.weight = parse_f64(field(&row, w, line, "weight")?, line, "weight")?;
        }
        for &j in &covariates {
            rec.covariates
                .push(parse_f64(field(&row, j, line, "covariate")?, line, &header.names[j])?);
        }
        for &j in &subgroups {
            // label is the column name minus the schema prefix
            let label = header.names[j].strip_prefix("g_").unwrap_or(&header.names[j]);
            rec.subgroups.insert(
                String::from(label),
                String::from(field(&row, j, line, "subgroup")?.trim()),
            );
        }
        let adopt_raw = field(&row, adoption, line, "adoption")?.trim();
        let adopt = if adopt_raw.is_empty() {
            None
        } else {
            Some(parse_i64(adopt_raw, line, "adoption_year")?)
        };
        match seen_adoption.get(&rec.group_id) {
            Some(prev) if *prev != adopt => {
                return Err(CliError::Data(format!(
                    "line {line}: conflicting adoption years for group {}",
                    rec.group_id
                )));
            }
            Some(_) => {}
            None => {
                seen_adoption.insert(rec.group_id.clone(), adopt);
                if let Some(e) = adopt {
                    schedule = schedule.adopt(&rec.group_id, e);
                }
            }
        }
        records.push(rec);
    }
    let table = build_table(&records).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((table, schedule))
}

/// Reads district-level rows for the selection test.
pub fn read_districts(
    path: &Path,
    district_col: &str,
    adopted_col: &str,
    outcome_col: &str,
    covariates: &Option<Vec<String>>,
) -> Result<Vec<DistrictRecord>> {
    let mut reader = open_reader(path)?;
    let header = read_header(&mut reader)?;
    let district = header.require(district_col)?;
    let adopted = header.require(adopted_col)?;
    let outcome = header.require(outcome_col)?;
    let controls = header.bind_many(covariates, "x_")?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let flag = parse_f64(field(&row, adopted, line, "adopted")?, line, "adopted")?;
        if flag != 0.0 && flag != 1.0 {
            return Err(CliError::Data(format!("line {line}: adopted must be 0 or 1")));
        }
        out.push(DistrictRecord {
            district: String::from(field(&row, district, line, "district")?),
            adopted: flag == 1.0,
            baseline_outcome: parse_f64(
                field(&row, outcome, line, "outcome")?,
                line,
                "outcome",
            )?,
            controls: controls
                .iter()
                .map(|&j| parse_f64(field(&row, j, line, "control")?, line, &header.names[j]))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes a generated panel in the ingestion schema.
pub fn write_panel(
    path: &Path,
    table: &ObservationTable,
    schedule: &AdoptionSchedule,
) -> Result<()> {
    let mut w = create_writer(path)?;
    let labels: Vec<&String> = table.subgroups.keys().collect();
    let mut header = vec![
        String::from("unit_id"),
        String::from("group_id"),
        String::from("time"),
        String::from("adoption_year"),
        String::from("outcome"),
    ];
    for name in &table.covariate_names {
        header.push(format!("x_{name}"));
    }
    for label in &labels {
        header.push(format!("g_{label}"));
    }
    w.write_record(&header).map_err(io_err)?;
    for row in 0..table.n_rows() {
        let group = &table.group.levels[table.group.codes[row] as usize];
        let mut rec = vec![
            table.unit_ids[row].clone(),
            group.clone(),
            table.time[row].to_string(),
            schedule
                .adoption_year(group)
                .map(|e| e.to_string())
                .unwrap_or_default(),
            sig12(table.outcome[row]),
        ];
        for v in table.covariate_row(row) {
            rec.push(sig12(*v));
        }
        for label in &labels {
            let col = &table.subgroups[*label];
            let code = col.codes[row];
            rec.push(if code == u32::MAX {
                String::new()
            } else {
                col.levels[code as usize].clone()
            });
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Plot-ready CSV: leads at negative relative time, horizons at
/// nonnegative, ordered by relative_time. `lead_n` supplies per-lead row
/// counts (same order as the profile's leads).
pub fn emit_event_study(
    path: &Path,
    curve: Option<&EventStudyCurve>,
    leads: Option<(&LeadProfile, &[usize])>,
    horizon_se: &[Option<f64>],
) -> Result<()> {
    let mut rows: Vec<(i64, f64, Option<f64>, usize)> = Vec::new();
    if let Some((profile, counts)) = leads {
        for (lead, &n) in profile.leads.iter().zip(counts) {
            rows.push((lead.p, lead.gamma, Some(lead.se), n));
        }
    }
    if let Some(curve) = curve {
        for (i, p) in curve.points.iter().enumerate() {
            let se = p.se.or_else(|| horizon_se.get(i).copied().flatten());
            rows.push((p.h, p.att, se, p.n));
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(String::from("nothing to emit: no leads, no horizons")));
    }
    rows.sort_by_key(|r| r.0);
    let mut w = create_writer(path)?;
    w.write_record(["relative_time", "estimate", "se", "n"]).map_err(io_err)?;
    for (t, est, se, n) in rows {
        w.write_record([
            t.to_string(),
            sig12(est),
            se.map(sig12).unwrap_or_default(),
            n.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

/// Reads arbitrary columns as text, for the index command.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = open_reader(path)?;
    let header = read_header(&mut reader)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        rows.push(row.map_err(|e| CliError::Data(format!("line {}: {e}", i + 2)))?);
    }
    Ok((header.names, rows))
}

/// Copies the input rows with a `pc1` column appended (blank = no score).
pub fn write_scores(
    path: &Path,
    header: &[String],
    rows: &[csv::StringRecord],
    scores: &[Option<f64>],
) -> Result<()> {
    let mut w = create_writer(path)?;
    let mut h: Vec<String> = header.to_vec();
    h.push(String::from("pc1"));
    w.write_record(&h).map_err(io_err)?;
    for (row, score) in rows.iter().zip(scores) {
        let mut rec: Vec<String> = row.iter().map(String::from).collect();
        rec.push(score.map(sig12).unwrap_or_default());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}
