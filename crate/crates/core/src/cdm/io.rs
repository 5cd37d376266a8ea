use std::io::Write;

use nalgebra::{Matrix6, Vector3};
use serde_json::{Map, Value};

use super::{CdmError, CdmRecord, CdmSeries, ObjectReport};
use crate::astro::{Epoch, StateVector};
use crate::textio::{format_f64, to_line};

pub const CDM_FORMAT: &str = "conjsim-cdm";
pub const CDM_CSV_FORMAT: &str = "conjsim-cdm-csv";
pub const CDM_FORMAT_VERSION: u32 = 1;

const AXES: [&str; 6] = ["R", "T", "N", "RDOT", "TDOT", "NDOT"];
const STATE: [&str; 6] = ["X_KM", "Y_KM", "Z_KM", "VX_KM_S", "VY_KM_S", "VZ_KM_S"];

/// Lower-triangular covariance entries `(row, col, name suffix)` in row-major order.
fn lower_triangle() -> impl Iterator<Item = (usize, usize, String)> {
    (0..6).flat_map(|i| (0..=i).map(move |j| (i, j, format!("C_{}_{}", AXES[i], AXES[j]))))
}

/// The 21 covariance column names of object `obj` (1 or 2).
pub fn covariance_column_names(obj: u8) -> Vec<String> {
    lower_triangle().map(|(_, _, s)| format!("OBJ{obj}_{s}")).collect()
}

/// Column names of one CDM record, in output order.
pub fn record_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["EVENT_ID", "CREATION_EPOCH_S", "TCA_S", "MISS_DISTANCE_KM", "RELATIVE_SPEED_KM_S"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for obj in [1u8, 2] {
        cols.extend(STATE.iter().map(|s| format!("OBJ{obj}_{s}")));
        cols.extend(covariance_column_names(obj));
        cols.push(format!("OBJ{obj}_OBS_AGE_S"));
    }
    cols.push("PC".into());
    cols.push("PC_METHOD".into());
    cols
}

enum Cell {
    Text(String),
    Num(f64),
    Missing,
}

fn record_cells(event_id: &str, r: &CdmRecord) -> Vec<Cell> {
    let mut cells = vec![
        Cell::Text(event_id.to_string()),
        Cell::Num(r.creation_epoch.seconds()),
        Cell::Num(r.tca_estimate.seconds()),
        Cell::Num(r.miss_distance_estimate),
        Cell::Num(r.relative_speed_estimate),
    ];
    for obj in [&r.target, &r.chaser] {
        cells.extend(obj.state_at_tca.to_array().map(Cell::Num));
        cells.extend(lower_triangle().map(|(i, j, _)| Cell::Num(obj.covariance_rtn[(i, j)])));
        cells.push(Cell::Num(obj.observation_age));
    }
    cells.push(r.collision_probability.map_or(Cell::Missing, Cell::Num));
    cells.push(
        r.collision_probability_method
            .clone()
            .map_or(Cell::Missing, Cell::Text),
    );
    cells
}

/// Writes a header line and one JSON object per record.
pub fn write_cdm_jsonl<W: Write>(series: &CdmSeries, mut out: W) -> Result<(), CdmError> {
    let mut header = Map::new();
    header.insert("FORMAT".into(), Value::from(CDM_FORMAT));
    header.insert("VERSION".into(), Value::from(CDM_FORMAT_VERSION));
    writeln!(out, "{}", to_line(&header))?;
    let cols = record_columns();
    for r in &series.records {
        let mut m = Map::new();
        for (name, cell) in cols.iter().zip(record_cells(&series.event_id, r)) {
            let v = match cell {
                Cell::Text(s) => Value::from(s),
                Cell::Num(x) => serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number),
                Cell::Missing => Value::Null,
            };
            m.insert(name.clone(), v);
        }
        writeln!(out, "{}", to_line(&m))?;
    }
    Ok(())
}

/// Writes a `# format=... version=...` comment, a header row and one row per record.
pub fn write_cdm_csv<W: Write>(series: &CdmSeries, mut out: W) -> Result<(), CdmError> {
    writeln!(out, "# format={CDM_CSV_FORMAT} version={CDM_FORMAT_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CdmError::Io(std::io::Error::other(e));
    w.write_record(record_columns()).map_err(csv_err)?;
    for r in &series.records {
        let row: Vec<String> = record_cells(&series.event_id, r)
            .into_iter()
            .map(|c| match c {
                Cell::Text(s) => s,
                Cell::Num(x) => format_f64(x),
                Cell::Missing => String::new(),
            })
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

struct Row<'a> {
    line: usize,
    get: Box<dyn Fn(&str) -> Option<Option<String>> + 'a>,
}

impl Row<'_> {
    fn err(&self, message: String) -> CdmError {
        CdmError::Parse {
            line: self.line,
            message,
        }
    }

    fn text(&self, name: &str) -> Result<Option<String>, CdmError> {
        (self.get)(name).ok_or_else(|| self.err(format!("missing field {name}")))
    }

    fn num(&self, name: &str) -> Result<f64, CdmError> {
        self.opt_num(name)?
            .ok_or_else(|| self.err(format!("field {name} is empty")))
    }

    fn opt_num(&self, name: &str) -> Result<Option<f64>, CdmError> {
        match self.text(name)? {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.err(format!("field {name}: {s:?} is not a number"))),
        }
    }

    fn covariance(&self, obj: u8) -> Result<Matrix6<f64>, CdmError> {
        let mut c = Matrix6::zeros();
        for (i, j, s) in lower_triangle() {
            let v = self.num(&format!("OBJ{obj}_{s}"))?;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
        Ok(c)
    }

    fn object(&self, obj: u8, tca: Epoch) -> Result<ObjectReport, CdmError> {
        let mut s = [0.0; 6];
        for (k, name) in STATE.iter().enumerate() {
            s[k] = self.num(&format!("OBJ{obj}_{name}"))?;
        }
        Ok(ObjectReport {
            state_at_tca: StateVector::new(Vector3::new(s[0], s[1], s[2]), Vector3::new(s[3], s[4], s[5]), tca),
            covariance_rtn: self.covariance(obj)?,
            observation_age: self.num(&format!("OBJ{obj}_OBS_AGE_S"))?,
        })
    }

    fn record(&self) -> Result<(String, CdmRecord), CdmError> {
        let id = self
            .text("EVENT_ID")?
            .ok_or_else(|| self.err("EVENT_ID is empty".into()))?;
        let tca = Epoch::from_seconds(self.num("TCA_S")?);
        Ok((
            id,
            CdmRecord {
                creation_epoch: Epoch::from_seconds(self.num("CREATION_EPOCH_S")?),
                tca_estimate: tca,
                miss_distance_estimate: self.num("MISS_DISTANCE_KM")?,
                relative_speed_estimate: self.num("RELATIVE_SPEED_KM_S")?,
                target: self.object(1, tca)?,
                chaser: self.object(2, tca)?,
                collision_probability: self.opt_num("PC")?,
                collision_probability_method: self.text("PC_METHOD")?,
            },
        ))
    }
}

fn assemble(records: Vec<(usize, String, CdmRecord)>) -> Result<CdmSeries, CdmError> {
    let mut event_id: Option<String> = None;
    let mut out = Vec::with_capacity(records.len());
    for (line, id, r) in records {
        match &event_id {
            Some(e) if *e != id => {
                return Err(CdmError::Parse {
                    line,
                    message: format!("event id {id:?} differs from {e:?} earlier in the file"),
                })
            }
            _ => event_id = Some(id),
        }
        out.push(r);
    }
    Ok(CdmSeries {
        event_id: event_id.unwrap_or_default(),
        ground_truth: None,
        records: out,
    })
}

/// Reads a series written by [`write_cdm_jsonl`]. Ground truth is never present.
pub fn parse_cdm_jsonl(text: &str) -> Result<CdmSeries, CdmError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(CdmError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header: Map<String, Value> = serde_json::from_str(header).map_err(|e| CdmError::Parse {
        line: 1,
        message: format!("header: {e}"),
    })?;
    let format = header.get("FORMAT").and_then(Value::as_str).unwrap_or("");
    let version = header.get("VERSION").and_then(Value::as_u64);
    if format != CDM_FORMAT || version != Some(CDM_FORMAT_VERSION as u64) {
        return Err(CdmError::Version {
            found: format!("{format} version {}", version.map_or("?".into(), |v| v.to_string())),
            expected: format!("{CDM_FORMAT} version {CDM_FORMAT_VERSION}"),
        });
    }
    let mut records = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let m: Map<String, Value> = serde_json::from_str(l).map_err(|e| CdmError::Parse {
            line,
            message: e.to_string(),
        })?;
        let row = Row {
            line,
            get: Box::new(|name| {
                m.get(name).map(|v| match v {
                    Value::Null => None,
                    Value::String(s) => Some(s.clone()),
                    other => Some(other.to_string()),
                })
            }),
        };
        let (id, r) = row.record()?;
        records.push((line, id, r));
    }
    assemble(records)
}

/// Data lines of a CSV file with `#` comments, as (1-based line, raw text).
fn csv_body(text: &str) -> (Vec<&str>, usize) {
    let mut comments = 0;
    let mut body = Vec::new();
    for l in text.lines() {
        if body.is_empty() && (l.starts_with('#') || l.trim().is_empty()) {
            comments += 1;
            continue;
        }
        body.push(l);
    }
    (body, comments)
}

fn csv_rows(text: &str) -> Result<(Vec<String>, Vec<(usize, csv::StringRecord)>), CdmError> {
    let (body, skipped) = csv_body(text);
    let joined = body.join("\n");
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(joined.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CdmError::Parse {
            line: skipped + 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = skipped + 2 + k;
        let rec = rec.map_err(|e| CdmError::Parse {
            line,
            message: e.to_string(),
        })?;
        rows.push((line, rec));
    }
    Ok((header, rows))
}

/// Reads a series written by [`write_cdm_csv`].
pub fn parse_cdm_csv(text: &str) -> Result<CdmSeries, CdmError> {
    let first = text.lines().next().unwrap_or("");
    let expected = format!("# format={CDM_CSV_FORMAT} version={CDM_FORMAT_VERSION}");
    if first.trim() != expected {
        return Err(CdmError::Version {
            found: first.to_string(),
            expected,
        });
    }
    let (header, rows) = csv_rows(text)?;
    let mut records = Vec::new();
    for (line, rec) in rows {
        let row = Row {
            line,
            get: Box::new(|name| {
                let i = header.iter().position(|h| h == name)?;
                let v = rec.get(i)?;
                Some(if v.is_empty() { None } else { Some(v.to_string()) })
            }),
        };
        let (id, r) = row.record()?;
        records.push((line, id, r));
    }
    assemble(records)
}

/// Sampled RTN covariances at TCA for the two objects.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceCovariances {
    pub target: Vec<Matrix6<f64>>,
    pub chaser: Vec<Matrix6<f64>>,
}

/// Reads a comma-separated table holding the 21 `OBJ1_C_*` and `OBJ2_C_*`
/// columns (other columns are ignored; leading `#` lines are comments).
pub fn read_reference_covariances(text: &str) -> Result<ReferenceCovariances, CdmError> {
    let (header, rows) = csv_rows(text)?;
    for obj in [1u8, 2] {
        for name in covariance_column_names(obj) {
            if !header.contains(&name) {
                return Err(CdmError::Parse {
                    line: 1,
                    message: format!("reference table lacks column {name}"),
                });
            }
        }
    }
    let mut out = ReferenceCovariances::default();
    for (line, rec) in rows {
        let row = Row {
            line,
            get: Box::new(|name| {
                let i = header.iter().position(|h| h == name)?;
                let v = rec.get(i)?;
                Some(if v.is_empty() { None } else { Some(v.to_string()) })
            }),
        };
        out.target.push(row.covariance(1)?);
        out.chaser.push(row.covariance(2)?);
    }
    if out.target.is_empty() {
        return Err(CdmError::Parse {
            line: 1,
            message: "reference table has no rows".into(),
        });
    }
    Ok(out)
}
