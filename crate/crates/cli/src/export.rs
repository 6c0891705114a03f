//! Arc export and re-import.
//!
//! An arc is flattened to a table with columns `t, j, <state>, <derived>`.
//! CSV stores floats with 17 significant digits (`{:.16e}`), JSON uses the
//! shortest round-trip representation, so both formats reload bit-exactly.

use std::io::{Read, Write};

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use synergy_core::potential::{potential, synergy_gap};
use synergy_core::quad::tracking::{w1, QuadFullState, TrackingLoop};
use synergy_core::{ClosedLoopState, HybridArc, Phase, PotentialConfig, Rotation, UnitVector};

use crate::config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub j: usize,
    pub values: Vec<f64>,
}

/// A flattened arc. `columns` names the entries of each row's `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcTable {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl ArcTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn from_arc<S>(columns: Vec<String>, arc: &HybridArc<S>, mut values: impl FnMut(f64, &S) -> Vec<f64>) -> Self {
        let rows = arc.iter().map(|(t, j, s)| Row { t, j, values: values(t, s) }).collect();
        Self { columns, rows }
    }

    fn to_arc<S>(&self, mut state: impl FnMut(&[f64]) -> Result<S, ExportError>) -> Result<HybridArc<S>, ExportError> {
        let mut phases: Vec<Phase<S>> = Vec::new();
        for row in &self.rows {
            let s = state(&row.values)?;
            match phases.last_mut() {
                Some(p) if p.j == row.j => p.samples.push((row.t, s)),
                _ => {
                    if row.j != phases.len() {
                        return Err(ExportError::Malformed(format!("phase index {} follows {} phases", row.j, phases.len())));
                    }
                    phases.push(Phase { j: row.j, samples: vec![(row.t, s)] });
                }
            }
        }
        Ok(HybridArc { phases })
    }
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn check_width(values: &[f64], want: usize) -> Result<(), ExportError> {
    if values.len() < want {
        return Err(ExportError::Malformed(format!("row has {} values, expected at least {want}", values.len())));
    }
    Ok(())
}

fn unit(values: &[f64]) -> Result<UnitVector, ExportError> {
    UnitVector::from_unit(DVector::from_column_slice(values)).map_err(|e| ExportError::Malformed(e.to_string()))
}

/// Columns `x0.., y0.., V, mu`.
pub fn sphere_table(arc: &HybridArc<ClosedLoopState>, cfg: &PotentialConfig) -> ArcTable {
    let n = cfg.dim();
    let columns = indexed("x", n).chain(indexed("y", n)).chain(["V".to_string(), "mu".to_string()]).collect();
    ArcTable::from_arc(columns, arc, |_, s| {
        let mut v: Vec<f64> = s.x.iter().chain(s.y.iter()).copied().collect();
        v.push(potential(cfg, &s.x, &s.y).unwrap_or(f64::NAN));
        v.push(synergy_gap(cfg, &s.x, &s.y).unwrap_or(f64::NAN));
        v
    })
}

pub fn sphere_arc(table: &ArcTable, dim: usize) -> Result<HybridArc<ClosedLoopState>, ExportError> {
    table.to_arc(|v| {
        check_width(v, 2 * dim)?;
        Ok(ClosedLoopState { x: unit(&v[..dim])?, y: unit(&v[dim..2 * dim])? })
    })
}

pub const QUAD_STATE_COLUMNS: [&str; 18] = [
    "p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33", "y_x", "y_y", "y_z",
];
pub const QUAD_DERIVED_COLUMNS: [&str; 7] = ["V", "mu", "Kz_norm", "kappa_u", "p_err", "v_err", "W1"];

pub fn quad_table(arc: &HybridArc<QuadFullState>, lp: &TrackingLoop<'_>) -> ArcTable {
    let columns = QUAD_STATE_COLUMNS.iter().chain(QUAD_DERIVED_COLUMNS.iter()).map(|c| c.to_string()).collect();
    ArcTable::from_arc(columns, arc, |t, s| {
        let m = s.rot.matrix();
        let d = lp.derived(t, s);
        let mut v: Vec<f64> = s.p.iter().chain(s.v.iter()).copied().collect();
        v.extend((0..3).flat_map(|i| (0..3).map(move |j| m[(i, j)])));
        v.extend(s.y.iter());
        v.extend([d.v1, d.mu, d.kz_norm, d.kappa_u, d.p_err_norm, d.v_err_norm, w1(lp.gains, &d)]);
        v
    })
}

pub fn quad_arc(table: &ArcTable) -> Result<HybridArc<QuadFullState>, ExportError> {
    table.to_arc(|v| {
        check_width(v, 18)?;
        let rot = Rotation::new(Matrix3::from_row_slice(&v[6..15])).map_err(|e| ExportError::Malformed(e.to_string()))?;
        Ok(QuadFullState {
            p: Vector3::from_column_slice(&v[0..3]),
            v: Vector3::from_column_slice(&v[3..6]),
            rot,
            y: unit(&v[15..18])?,
        })
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(table: &ArcTable, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "j"].into_iter().map(String::from).chain(table.columns.iter().cloned()))?;
    for row in &table.rows {
        w.write_record(std::iter::once(fmt_f64(row.t)).chain(std::iter::once(row.j.to_string())).chain(row.values.iter().map(|v| fmt_f64(*v))))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<ArcTable, ExportError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" || &header[1] != "j" {
        return Err(ExportError::Malformed("header must start with t,j".into()));
    }
    let columns: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let parse = |s: &str| s.parse::<f64>().map_err(|e| ExportError::Malformed(format!("'{s}': {e}")));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t = parse(&rec[0])?;
        let j = rec[1].parse::<usize>().map_err(|e| ExportError::Malformed(format!("j '{}': {e}", &rec[1])))?;
        let values = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { t, j, values });
    }
    Ok(ArcTable { columns, rows })
}

/// Provenance written next to every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

impl Meta {
    pub fn new(mode: &str, seed: u64, config: &ScenarioConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            seed,
            config: config.clone(),
            columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonPhase {
    pub j: usize,
    /// Each sample is `[t, values...]`.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonArc {
    pub meta: Meta,
    pub phases: Vec<JsonPhase>,
}

impl JsonArc {
    pub fn new(table: &ArcTable, mut meta: Meta) -> Self {
        meta.columns = table.columns.clone();
        let mut phases: Vec<JsonPhase> = Vec::new();
        for row in &table.rows {
            let sample = std::iter::once(row.t).chain(row.values.iter().copied()).collect();
            match phases.last_mut() {
                Some(p) if p.j == row.j => p.samples.push(sample),
                _ => phases.push(JsonPhase { j: row.j, samples: vec![sample] }),
            }
        }
        Self { meta, phases }
    }

    pub fn table(&self) -> Result<ArcTable, ExportError> {
        let mut rows = Vec::new();
        for p in &self.phases {
            for s in &p.samples {
                let (t, values) = s.split_first().ok_or_else(|| ExportError::Malformed("empty sample".into()))?;
                rows.push(Row { t: *t, j: p.j, values: values.to_vec() });
            }
        }
        Ok(ArcTable { columns: self.meta.columns.clone(), rows })
    }
}

/// JSON cannot carry NaN or infinities.
pub fn check_json_encodable(table: &ArcTable) -> Result<(), ExportError> {
    for row in &table.rows {
        if !row.t.is_finite() || row.values.iter().any(|v| !v.is_finite()) {
            return Err(ExportError::Malformed(format!("non-finite value at t = {}; use CSV output", row.t)));
        }
    }
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(doc: &T, mut out: W) -> Result<(), ExportError> {
    serde_json::to_writer_pretty(&mut out, doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json_arc<R: Read>(input: R) -> Result<JsonArc, ExportError> {
    Ok(serde_json::from_reader(input)?)
}
