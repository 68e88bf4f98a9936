//! Machine-readable outputs: optimisation curves, schedules, result documents
//! and aggregated result tables. Nothing here carries wall-clock timestamps, so
//! identical inputs give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::{switching_count, Breakdown, ObjectiveKind, OptimizationResult};
use crate::energy_data::IntervalSeries;
use crate::error::Result;
use crate::sensitivity::{SweepParam, SweepRow};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header of `curve.csv` for an objective.
pub fn curve_header(kind: ObjectiveKind) -> &'static [&'static str] {
    match kind {
        ObjectiveKind::Emission => &["u", "X", "embedded", "operation", "idle", "total", "cores", "optimum"],
        ObjectiveKind::Cost => &["u", "X", "operation", "idle", "demand", "acq", "total", "cores", "optimum"],
    }
}

/// One row per attainable utilisation with every objective term, the scaled
/// core count and a 0/1 marker on the optimum.
pub fn write_curve_csv(result: &OptimizationResult, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(curve_header(result.objective))?;
    for (i, p) in result.curve.iter().enumerate() {
        let mut row = vec![p.u.to_string(), p.threshold.to_string()];
        match &p.breakdown {
            Breakdown::Emission(b) => {
                row.extend([b.embedded, b.operation, b.idle, b.total].map(|v| v.to_string()));
            }
            Breakdown::Cost(b) => {
                row.extend([b.operation, b.idle, b.demand, b.acquisition, b.total].map(|v| v.to_string()));
            }
        }
        row.push(p.scaled_cores.to_string());
        row.push(u8::from(i == result.optimum_index).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `start_utc,run` with `run` in {0, 1}, chronological.
pub fn write_schedule_csv(series: &IntervalSeries, run_mask: &[bool], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["start_utc", "run"])?;
    for (iv, run) in series.intervals().iter().zip(run_mask) {
        w.write_record([
            iv.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            u8::from(*run).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub setup: String,
    pub workload: String,
    pub objective: ObjectiveKind,
    pub u_opt: f64,
    /// `null` when constant operation is optimal.
    pub threshold: Option<f64>,
    pub relative_objective: f64,
    pub scaled_cores: f64,
    pub pauses: usize,
    pub n_intervals: usize,
    pub t_total_h: f64,
    pub breakdown: Breakdown,
    pub baseline: Breakdown,
}

impl ResultDocument {
    pub fn new(setup: &str, workload: &str, series: &IntervalSeries, r: &OptimizationResult) -> Self {
        ResultDocument {
            setup: setup.to_string(),
            workload: workload.to_string(),
            objective: r.objective,
            u_opt: r.u_opt,
            threshold: r.threshold,
            relative_objective: r.relative_objective,
            scaled_cores: r.scaled_cores,
            pauses: switching_count(&r.policy),
            n_intervals: series.len(),
            t_total_h: series.t_total(),
            breakdown: r.breakdown,
            baseline: r.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

/// Which inputs produced an output, identified by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub inputs: Vec<InputChecksum>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Provenance {
    pub fn for_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let inputs = paths
            .iter()
            .map(|p| {
                Ok(InputChecksum {
                    path: p.as_ref().display().to_string(),
                    sha256: sha256_hex(&fs::read(p)?),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Provenance {
            tool_version: TOOL_VERSION.to_string(),
            inputs,
        })
    }

    /// Digest over all input checksums.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for i in &self.inputs {
            h.update(i.path.as_bytes());
            h.update([0]);
            h.update(i.sha256.as_bytes());
            h.update([0]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub setup: String,
    pub workload: String,
    pub objective: ObjectiveKind,
    pub u_opt: f64,
    pub threshold: Option<f64>,
    pub relative_objective: f64,
}

impl From<&ResultDocument> for TableRow {
    fn from(d: &ResultDocument) -> Self {
        TableRow {
            setup: d.setup.clone(),
            workload: d.workload.clone(),
            objective: d.objective,
            u_opt: d.u_opt,
            threshold: d.threshold,
            relative_objective: d.relative_objective,
        }
    }
}

/// Optimisation results across setups and workloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
    pub provenance: Option<Provenance>,
}

impl ResultTable {
    /// Rounded for display: utilisation and ratio to 3 decimals, threshold to 2.
    /// The threshold cell is empty for constant operation.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["setup", "workload", "objective", "u_opt", "X", "relative"])?;
        for r in &self.rows {
            w.write_record([
                r.setup.clone(),
                r.workload.clone(),
                format!("{:?}", r.objective).to_lowercase(),
                format!("{:.3}", r.u_opt),
                r.threshold.map(|x| format!("{x:.2}")).unwrap_or_default(),
                format!("{:.3}", r.relative_objective),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const SWEEP_HEADER: [&str; 5] = ["param", "value", "u_opt", "X", "relative_objective"];

pub fn write_sweep_csv(param: SweepParam, rows: &[SweepRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            param.name().to_string(),
            r.value.to_string(),
            r.u_opt.to_string(),
            r.threshold.map(|x| x.to_string()).unwrap_or_default(),
            r.relative_objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(reader: impl std::io::Read) -> Result<(SweepParam, Vec<SweepRow>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut param = None;
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| crate::error::Error::MalformedRow {
            row: idx + 1,
            msg: format!("bad {what}"),
        };
        param = Some(rec[0].parse::<SweepParam>()?);
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(SWEEP_HEADER[i]));
        rows.push(SweepRow {
            value: num(1)?,
            u_opt: num(2)?,
            threshold: if rec[3].is_empty() { None } else { Some(num(3)?) },
            relative_objective: num(4)?,
        });
    }
    let param = param.ok_or(crate::error::Error::MalformedRow {
        row: 0,
        msg: "empty sweep file".into(),
    })?;
    Ok((param, rows))
}

/// Writes via a temporary sibling and a rename, so a failed run leaves no
/// partially written file behind.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = PathBuf::from(path);
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
