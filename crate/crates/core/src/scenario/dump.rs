use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{LikelihoodSigmas, ScenarioError};
use crate::ppl::{effective_sample_size, WeightedPosterior};
use crate::textio::to_line;

pub const DUMP_FORMAT: &str = "conjsim-posterior";
pub const DUMP_VERSION: u32 = 1;

/// First line of a posterior dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub condition_on: String,
    pub n_samples: usize,
    pub ess: f64,
    pub log_normalizer: f64,
    pub sigmas: LikelihoodSigmas,
    pub sites: Vec<String>,
}

/// Weighted samples read back from a dump. A `None` log weight is a
/// zero-weight proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDump {
    pub header: DumpHeader,
    pub log_weights: Vec<Option<f64>>,
    /// `values[i][j]` is site `j` of sample `i`.
    pub values: Vec<Vec<f64>>,
}

impl PosteriorDump {
    pub fn site_index(&self, site: &str) -> Option<usize> {
        self.header.sites.iter().position(|s| s == site)
    }
}

/// Writes the header line then one line per sample: its log weight (null
/// when zero) and the value of every site.
pub fn write_posterior_dump<W: Write>(
    posterior: &WeightedPosterior,
    sites: &[String],
    sigmas: &LikelihoodSigmas,
    condition_on: &str,
    mut out: W,
) -> Result<(), ScenarioError> {
    let io = |e: std::io::Error| ScenarioError::InvalidArgument(format!("writing posterior dump: {e}"));
    let header = DumpHeader {
        format: DUMP_FORMAT.into(),
        version: DUMP_VERSION,
        condition_on: condition_on.into(),
        n_samples: posterior.len(),
        ess: effective_sample_size(posterior),
        log_normalizer: posterior.log_normalizer,
        sigmas: *sigmas,
        sites: sites.to_vec(),
    };
    writeln!(out, "{}", to_line(&header)).map_err(io)?;
    for s in &posterior.samples {
        let mut m = Map::new();
        let lw = if s.log_weight.is_finite() {
            Value::from(s.log_weight)
        } else {
            Value::Null
        };
        m.insert("LOG_WEIGHT".into(), lw);
        for site in sites {
            let v = s
                .trace
                .get(site, 0)
                .ok_or_else(|| ScenarioError::InvalidArgument(format!("site {site} missing from a trace")))?;
            m.insert(site.clone(), Value::from(v));
        }
        writeln!(out, "{}", to_line(&m)).map_err(io)?;
    }
    Ok(())
}

pub fn parse_posterior_dump(text: &str) -> Result<PosteriorDump, ScenarioError> {
    let bad = |line: usize, msg: String| ScenarioError::InvalidArgument(format!("posterior dump line {line}: {msg}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let raw: Map<String, Value> = serde_json::from_str(first).map_err(|e| bad(1, e.to_string()))?;
    let format = raw.get("FORMAT").and_then(Value::as_str).unwrap_or("");
    let version = raw.get("VERSION").and_then(Value::as_u64);
    if format != DUMP_FORMAT || version != Some(DUMP_VERSION as u64) {
        return Err(bad(
            1,
            format!("unsupported format {format:?} version {version:?} (expected {DUMP_FORMAT} version {DUMP_VERSION})"),
        ));
    }
    let header: DumpHeader = serde_json::from_value(Value::Object(raw)).map_err(|e| bad(1, e.to_string()))?;
    let mut log_weights = Vec::new();
    let mut values = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let m: Map<String, Value> = serde_json::from_str(l).map_err(|e| bad(line, e.to_string()))?;
        let lw = match m.get("LOG_WEIGHT") {
            Some(Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| bad(line, "LOG_WEIGHT is not a number".into()))?),
            None => return Err(bad(line, "missing LOG_WEIGHT".into())),
        };
        let row: Result<Vec<f64>, ScenarioError> = header
            .sites
            .iter()
            .map(|s| {
                m.get(s)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad(line, format!("missing or non-numeric {s}")))
            })
            .collect();
        log_weights.push(lw);
        values.push(row?);
    }
    Ok(PosteriorDump {
        header,
        log_weights,
        values,
    })
}
