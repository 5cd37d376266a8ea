use nalgebra::Matrix6;
use rayon::prelude::*;
use serde::Serialize;

use super::model::{rejection_sample_conjunction, SampledConjunction};
use super::{ScenarioConfig, ScenarioError};
use crate::cdm::{issue_cdm_series, ReferenceCovariances, SensorModel};
use crate::rng::{derive_seed, substream};

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
const AXES: [&str; 6] = ["R", "T", "N", "RDOT", "TDOT", "NDOT"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    /// Conjunctions simulated per objective evaluation. Event `i` is the one
    /// dataset generation produces with the same seed.
    pub n_events: usize,
    pub max_attempts: usize,
    /// Search interval for each scale factor.
    pub scale_bounds: (f64, f64),
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_rounds: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            n_events: 20,
            max_attempts: 100_000,
            scale_bounds: (0.01, 100.0),
            tolerance: 1e-3,
            max_iterations: 60,
            max_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryQuantiles {
    pub object: String,
    pub entry: String,
    pub reference: Vec<f64>,
    pub simulated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub target_scale: f64,
    pub chaser_scale: f64,
    pub target_objective: f64,
    pub chaser_objective: f64,
    pub rounds: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub warning: Option<String>,
    pub n_reference: usize,
    pub n_simulated: usize,
    pub quantile_levels: Vec<f64>,
    pub entries: Vec<EntryQuantiles>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub target_sensor: SensorModel,
    pub chaser_sensor: SensorModel,
    pub report: CalibrationReport,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

fn diagonal_sorted(covs: &[Matrix6<f64>], k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = covs.iter().map(|c| c[(k, k)]).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn diagonal_medians(covs: &[Matrix6<f64>]) -> [f64; 6] {
    std::array::from_fn(|k| quantile(&diagonal_sorted(covs, k), 0.5))
}

/// Objective and subgradient sign count of one object's log-ratios.
fn score(sim: &[Matrix6<f64>], reference: &[f64; 6]) -> (f64, i32) {
    let med = diagonal_medians(sim);
    let mut objective = 0.0;
    let mut sign = 0;
    for k in 0..6 {
        let r = (med[k] / reference[k]).ln();
        objective += r.abs();
        sign += if r > 0.0 {
            1
        } else if r < 0.0 {
            -1
        } else {
            0
        };
    }
    (objective, sign)
}

/// Covariances of every message of `events`, re-issued with both sensors
/// scaled. Each event reuses the noise stream it was generated with.
pub fn simulate_covariances(
    config: &ScenarioConfig,
    events: &[SampledConjunction],
    target_scale: f64,
    chaser_scale: f64,
) -> Result<(Vec<Matrix6<f64>>, Vec<Matrix6<f64>>), ScenarioError> {
    let target_sensor = config.target_sensor.scaled(target_scale);
    let chaser_sensor = config.chaser_sensor.scaled(chaser_scale);
    let params = config.issue_params();
    let per_event: Result<Vec<_>, ScenarioError> = events
        .par_iter()
        .map(|s| {
            let series = issue_cdm_series(
                &s.event,
                &s.series.event_id,
                &target_sensor,
                &chaser_sensor,
                &params,
                &config.propagator,
                config.window(),
                &mut substream(s.attempt_seed, 1),
            )?;
            Ok(series
                .records
                .iter()
                .map(|r| (r.target.covariance_rtn, r.chaser.covariance_rtn))
                .collect::<Vec<_>>())
        })
        .collect();
    Ok(per_event?.into_iter().flatten().unzip())
}

struct Search {
    scale: f64,
    objective: f64,
    evaluations: usize,
    converged: bool,
    bracketed: bool,
}

/// Bisection in log-scale on the sign of the objective's subgradient.
fn bisect<F>(mut eval: F, settings: &CalibrationSettings) -> Result<Search, ScenarioError>
where
    F: FnMut(f64) -> Result<(f64, i32), ScenarioError>,
{
    let (mut lo, mut hi) = (settings.scale_bounds.0.ln(), settings.scale_bounds.1.ln());
    let (f_lo, h_lo) = eval(lo.exp())?;
    let (f_hi, h_hi) = eval(hi.exp())?;
    let mut evaluations = 2;
    let mut best = if f_lo <= f_hi { (lo, f_lo) } else { (hi, f_hi) };
    if h_lo > 0 || h_hi < 0 {
        return Ok(Search {
            scale: best.0.exp(),
            objective: best.1,
            evaluations,
            converged: false,
            bracketed: false,
        });
    }
    let mut prev: Option<f64> = None;
    let mut converged = false;
    for _ in 0..settings.max_iterations {
        let mid = 0.5 * (lo + hi);
        let (f, h) = eval(mid.exp())?;
        evaluations += 1;
        if f < best.1 {
            best = (mid, f);
        }
        match h.cmp(&0) {
            std::cmp::Ordering::Less => lo = mid,
            std::cmp::Ordering::Greater => hi = mid,
            std::cmp::Ordering::Equal => {
                best = (mid, f);
                converged = true;
                break;
            }
        }
        if prev.is_some_and(|p| (f - p).abs() < settings.tolerance) && hi - lo < settings.tolerance {
            converged = true;
            break;
        }
        prev = Some(f);
    }
    Ok(Search {
        scale: best.0.exp(),
        objective: best.1,
        evaluations,
        converged,
        bracketed: true,
    })
}

fn entry_quantiles(object: &str, reference: &[Matrix6<f64>], simulated: &[Matrix6<f64>]) -> Vec<EntryQuantiles> {
    (0..6)
        .map(|k| {
            let r = diagonal_sorted(reference, k);
            let s = diagonal_sorted(simulated, k);
            EntryQuantiles {
                object: object.to_string(),
                entry: format!("C_{0}_{0}", AXES[k]),
                reference: QUANTILE_LEVELS.iter().map(|q| quantile(&r, *q)).collect(),
                simulated: QUANTILE_LEVELS.iter().map(|q| quantile(&s, *q)).collect(),
            }
        })
        .collect()
}

/// Scales each object's sensor noise so the medians of the simulated
/// covariance diagonals at TCA match `reference`.
///
/// The two scale factors are searched one at a time, alternating until the
/// summed objective changes by less than the tolerance.
pub fn calibrate_sensors(
    reference: &ReferenceCovariances,
    config: &ScenarioConfig,
    seed: u64,
    settings: &CalibrationSettings,
) -> Result<Calibration, ScenarioError> {
    config.validate()?;
    if reference.target.is_empty() || reference.chaser.is_empty() {
        return Err(ScenarioError::InvalidArgument("reference covariance set is empty".into()));
    }
    if settings.n_events == 0 {
        return Err(ScenarioError::InvalidArgument("calibration needs at least one event".into()));
    }
    let ref_target = diagonal_medians(&reference.target);
    let ref_chaser = diagonal_medians(&reference.chaser);
    if ref_target.iter().chain(&ref_chaser).any(|m| !(*m > 0.0)) {
        return Err(ScenarioError::InvalidArgument(
            "reference covariance diagonals must have positive medians".into(),
        ));
    }

    let events: Result<Vec<SampledConjunction>, ScenarioError> = (0..settings.n_events)
        .into_par_iter()
        .map(|i| {
            rejection_sample_conjunction(
                config,
                derive_seed(seed, &[i as u64]),
                &format!("calibration-{i}"),
                settings.max_attempts,
            )
        })
        .collect();
    let events = events?;

    let (mut ts, mut cs) = (1.0, 1.0);
    let mut evaluations = 0;
    let mut previous = f64::INFINITY;
    let mut converged = false;
    let mut warning = None;
    let (mut t_obj, mut c_obj) = (f64::NAN, f64::NAN);
    let mut rounds = 0;
    while rounds < settings.max_rounds {
        rounds += 1;
        let t = bisect(
            |s| Ok(score(&simulate_covariances(config, &events, s, cs)?.0, &ref_target)),
            settings,
        )?;
        ts = t.scale;
        let c = bisect(
            |s| Ok(score(&simulate_covariances(config, &events, ts, s)?.1, &ref_chaser)),
            settings,
        )?;
        cs = c.scale;
        evaluations += t.evaluations + c.evaluations;
        (t_obj, c_obj) = (t.objective, c.objective);
        for (name, s) in [("target", &t), ("chaser", &c)] {
            if !s.bracketed {
                warning = Some(format!(
                    "{name} optimum lies outside the scale interval [{}, {}]; best endpoint reported",
                    settings.scale_bounds.0, settings.scale_bounds.1
                ));
            } else if !s.converged {
                warning = Some(format!("{name} search stopped after {} iterations", settings.max_iterations));
            }
        }
        let total = t_obj + c_obj;
        if (previous - total).abs() < settings.tolerance {
            converged = warning.is_none();
            break;
        }
        previous = total;
    }
    if !converged && warning.is_none() {
        warning = Some(format!("alternating search did not settle within {} rounds", settings.max_rounds));
    }

    let (sim_t, sim_c) = simulate_covariances(config, &events, ts, cs)?;
    let mut entries = entry_quantiles("target", &reference.target, &sim_t);
    entries.extend(entry_quantiles("chaser", &reference.chaser, &sim_c));
    Ok(Calibration {
        target_sensor: config.target_sensor.scaled(ts),
        chaser_sensor: config.chaser_sensor.scaled(cs),
        report: CalibrationReport {
            target_scale: ts,
            chaser_scale: cs,
            target_objective: t_obj,
            chaser_objective: c_obj,
            rounds,
            evaluations,
            converged,
            warning,
            n_reference: reference.target.len(),
            n_simulated: sim_t.len(),
            quantile_levels: QUANTILE_LEVELS.to_vec(),
            entries,
        },
    })
}
