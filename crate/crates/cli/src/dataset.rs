//! Dataset generation: one CDM file and one ground-truth sidecar per event,
//! then the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use conjsim::cdm::write_cdm_jsonl;
use conjsim::conjunction::ConjunctionEvent;
use conjsim::rng::derive_seed;
use conjsim::scenario::{rejection_sample_conjunction, ScenarioConfig, ScenarioError};
use conjsim::textio::to_pretty;

use crate::{io_err, write_text, CliError, EXIT_OTHER};

pub const DATASET_FORMAT: &str = "conjsim-dataset";
pub const TRUTH_FORMAT: &str = "conjsim-truth";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub n_events: usize,
    pub seed: u64,
    pub workers: usize,
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEntry {
    pub event_id: String,
    pub attempts: usize,
    pub cdm_count: usize,
    pub tca_s: f64,
    pub miss_distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedEntry {
    pub event_id: String,
    pub attempts: usize,
    pub reason: String,
}

/// `manifest.json`. Written after every event file, so its presence marks a
/// complete dataset. Wall-clock timing lives in `timing.json` to keep the
/// manifest reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub dataset_id: String,
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub requested_events: usize,
    pub event_count: usize,
    pub attempts_total: usize,
    /// Conjunctions per prior draw.
    pub conjunction_rate: f64,
    pub rejections: BTreeMap<String, usize>,
    pub timing_file: String,
    pub events: Vec<EventEntry>,
    pub failed: Vec<FailedEntry>,
}

#[derive(Serialize)]
struct Truth<'a> {
    format: &'static str,
    version: u32,
    event_id: &'a str,
    attempts: usize,
    attempt_seed: u64,
    event: &'a ConjunctionEvent,
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
    workers: usize,
    events_per_second: f64,
}

pub fn event_id(i: usize) -> String {
    format!("evt-{i:06}")
}

enum Produced {
    Event(EventEntry, BTreeMap<String, usize>),
    Failed(FailedEntry, BTreeMap<String, usize>),
}

fn produce(cfg: &ScenarioConfig, opts: &GenerateOptions, out: &Path, i: usize) -> Result<Produced, CliError> {
    let id = event_id(i);
    match rejection_sample_conjunction(cfg, derive_seed(opts.seed, &[i as u64]), &id, opts.max_attempts) {
        Ok(s) => {
            let mut buf = Vec::new();
            write_cdm_jsonl(&s.series, &mut buf)?;
            write_text(&out.join("events").join(format!("{id}.cdm.jsonl")), &String::from_utf8(buf).expect("UTF-8"))?;
            let truth = Truth {
                format: TRUTH_FORMAT,
                version: DATASET_VERSION,
                event_id: &id,
                attempts: s.attempts,
                attempt_seed: s.attempt_seed,
                event: &s.event,
            };
            write_text(&out.join("truth").join(format!("{id}.truth.json")), &(to_pretty(&truth) + "\n"))?;
            log::info!(
                "{id}: {} attempts, TCA {:.1} s, miss {:.3} km, {} CDMs",
                s.attempts,
                s.event.tca.seconds(),
                s.event.miss_distance,
                s.series.records.len()
            );
            Ok(Produced::Event(
                EventEntry {
                    event_id: id,
                    attempts: s.attempts,
                    cdm_count: s.series.records.len(),
                    tca_s: s.event.tca.seconds(),
                    miss_distance_km: s.event.miss_distance,
                },
                s.rejections,
            ))
        }
        Err(ScenarioError::CapExhausted { attempts, reasons }) => {
            log::warn!("{id}: no conjunction within {attempts} attempts");
            Ok(Produced::Failed(
                FailedEntry {
                    event_id: id,
                    attempts,
                    reason: format!("no conjunction within {attempts} attempts"),
                },
                reasons,
            ))
        }
        Err(e) => Err(e.into()),
    }
}

/// Generates `opts.n_events` events into `out`. Events whose attempt cap runs
/// out are listed under `failed` in the manifest.
pub fn generate_dataset(cfg: &ScenarioConfig, opts: &GenerateOptions, out: &Path) -> Result<DatasetManifest, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    }
    for d in ["events", "truth"] {
        fs::create_dir_all(out.join(d)).map_err(|e| io_err(&out.join(d), e))?;
    }
    write_text(&out.join("config.toml"), &cfg.to_toml_string())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))?;
    let produced: Result<Vec<Produced>, CliError> =
        pool.install(|| (0..opts.n_events).into_par_iter().map(|i| produce(cfg, opts, out, i)).collect());

    let mut events = Vec::new();
    let mut failed = Vec::new();
    let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
    let mut attempts_total = 0;
    for p in produced? {
        let r = match p {
            Produced::Event(e, r) => {
                attempts_total += e.attempts;
                events.push(e);
                r
            }
            Produced::Failed(f, r) => {
                attempts_total += f.attempts;
                failed.push(f);
                r
            }
        };
        for (k, v) in r {
            *rejections.entry(k).or_default() += v;
        }
    }
    let hash = cfg.hash();
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        dataset_id: format!("{}-{}", &hash[..12], opts.seed),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        master_seed: opts.seed,
        requested_events: opts.n_events,
        event_count: events.len(),
        attempts_total,
        conjunction_rate: if attempts_total > 0 {
            events.len() as f64 / attempts_total as f64
        } else {
            0.0
        },
        rejections,
        timing_file: "timing.json".into(),
        events,
        failed,
    };
    let wall = started.elapsed().as_secs_f64();
    let timing = Timing {
        wall_time_s: wall,
        workers: opts.workers.max(1),
        events_per_second: manifest.event_count as f64 / wall.max(1e-9),
    };
    write_text(&out.join("timing.json"), &(to_pretty(&timing) + "\n"))?;
    write_text(&manifest_path, &(to_pretty(&manifest) + "\n"))?;
    Ok(manifest)
}
