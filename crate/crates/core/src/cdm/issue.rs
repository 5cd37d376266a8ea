use nalgebra::Matrix6;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{
    collision_probability_2d, propagate_uncertainty_mc, CdmError, CdmRecord, CdmSeries, ObjectReport, SensorModel,
    DEFAULT_HARD_BODY_RADIUS_KM, PC_METHOD,
};
use crate::astro::{block_rotation, rtn_frame, state_to_elements_with_bstar, Epoch, OrbitalElements, StateVector};
use crate::conjunction::{relative_geometry_of, screen_ephemerides, ConjunctionEvent, Encounter, DEFAULT_STEP_S};
use crate::constants::SECONDS_PER_DAY;
use crate::propagation::{propagate, Propagated, PropagatorSpec};

/// Parameters of the CDM issuing process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IssueParams {
    pub cadence_s: f64,
    pub lead_s: f64,
    pub jitter_s: f64,
    pub n_mc: usize,
    /// Collision probability is computed when set.
    pub hard_body_radius_km: Option<f64>,
    /// Half-width of the re-screening bracket around the true TCA.
    pub rescreen_half_width_s: f64,
    pub rescreen_step_s: f64,
}

impl Default for IssueParams {
    fn default() -> Self {
        IssueParams {
            cadence_s: 8.0 * 3600.0,
            lead_s: 7.0 * SECONDS_PER_DAY,
            jitter_s: 3600.0,
            n_mc: 200,
            hard_body_radius_km: Some(DEFAULT_HARD_BODY_RADIUS_KM),
            rescreen_half_width_s: 1800.0,
            rescreen_step_s: DEFAULT_STEP_S,
        }
    }
}

impl IssueParams {
    pub fn validate(&self) -> Result<(), CdmError> {
        let bad = |m: String| Err(CdmError::InvalidParams(m));
        if !(self.cadence_s > 0.0 && self.cadence_s.is_finite()) {
            return bad(format!("cadence must be positive, got {}", self.cadence_s));
        }
        if !(self.lead_s > 0.0 && self.lead_s <= 7.0 * SECONDS_PER_DAY) {
            return bad(format!("lead must be in (0, 7 days], got {} s", self.lead_s));
        }
        if !(self.jitter_s >= 0.0 && self.jitter_s < 0.5 * self.cadence_s) {
            return bad(format!("jitter must be in [0, cadence/2), got {}", self.jitter_s));
        }
        if self.n_mc < 10 {
            return bad(format!("n_mc must be at least 10, got {}", self.n_mc));
        }
        if let Some(r) = self.hard_body_radius_km {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("hard-body radius must be non-negative, got {r}"));
            }
        }
        if !(self.rescreen_half_width_s > 0.0 && self.rescreen_step_s > 0.0) {
            return bad("re-screening bracket and step must be positive".into());
        }
        Ok(())
    }
}

/// Creation epochs `tca − lead + k·cadence + U(−jitter, jitter)` for
/// `k = 0..floor(lead/cadence)`, keeping those in `[window.0, tca)`.
///
/// All jitter values are drawn whether or not the epoch is kept. When no epoch
/// survives and the window starts before the TCA, a single epoch at the window
/// start is returned.
pub fn issuing_epochs<R: Rng + ?Sized>(tca: Epoch, params: &IssueParams, window: (Epoch, Epoch), rng: &mut R) -> Vec<Epoch> {
    let count = (params.lead_s / params.cadence_s + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let jitter = if params.jitter_s > 0.0 {
            rng.random_range(-params.jitter_s..params.jitter_s)
        } else {
            0.0
        };
        let t = tca - params.lead_s + k as f64 * params.cadence_s + jitter;
        if t >= window.0 && t < tca {
            out.push(t);
        }
    }
    if out.is_empty() && window.0 < tca {
        out.push(window.0);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Observation {
    state: StateVector,
    mc_seed: u64,
}

fn observe_object<R: Rng + RngCore + ?Sized>(
    truth: &OrbitalElements,
    at: Epoch,
    sensor: &SensorModel,
    spec: &PropagatorSpec,
    rng: &mut R,
) -> Result<Observation, CdmError> {
    let true_state = propagate(truth, at, spec)?;
    let state = super::observe_state(&true_state, sensor, rng)?;
    Ok(Observation {
        state,
        mc_seed: rng.next_u64(),
    })
}

fn nominal(obs: &Observation, bstar: f64, spec: &PropagatorSpec) -> Result<Propagated, CdmError> {
    let el = state_to_elements_with_bstar(&obs.state, bstar)?;
    Ok(Propagated::new(el, *spec)?)
}

/// Covariance of `report` rotated from its own RTN frame into the inertial frame.
fn to_inertial(cov_rtn: &Matrix6<f64>, frame_state: &StateVector) -> Result<Matrix6<f64>, CdmError> {
    let b = block_rotation(&rtn_frame(frame_state)?);
    Ok(b.transpose() * cov_rtn * b)
}

/// Re-screened geometry of one message, before any covariance is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdmEstimate {
    pub creation_epoch: Epoch,
    pub tca_estimate: Epoch,
    pub miss_distance_estimate: f64,
    pub target_state: StateVector,
    pub chaser_state: StateVector,
}

type ObjectObservation = (Observation, Epoch);

fn check_request(
    event: &ConjunctionEvent,
    target_sensor: &SensorModel,
    chaser_sensor: &SensorModel,
    params: &IssueParams,
    window: (Epoch, Epoch),
) -> Result<(), CdmError> {
    params.validate()?;
    target_sensor.validate()?;
    chaser_sensor.validate()?;
    if !(event.tca >= window.0 && event.tca <= window.1) {
        return Err(CdmError::InvalidParams(format!(
            "event TCA {} outside window [{}, {}]",
            event.tca, window.0, window.1
        )));
    }
    Ok(())
}

/// Creation epochs and the observation each message is based on. Stops after
/// `max_records` messages.
#[allow(clippy::too_many_arguments)]
fn draw_observations<R: Rng + RngCore + ?Sized>(
    event: &ConjunctionEvent,
    target_sensor: &SensorModel,
    chaser_sensor: &SensorModel,
    params: &IssueParams,
    spec: &PropagatorSpec,
    window: (Epoch, Epoch),
    max_records: usize,
    rng: &mut R,
) -> Result<Vec<(Epoch, ObjectObservation, ObjectObservation)>, CdmError> {
    let epochs = issuing_epochs(event.tca, params, window, rng);
    let (t_el, c_el) = (&event.target_elements, &event.chaser_elements);
    let mut out = Vec::with_capacity(epochs.len().min(max_records));
    let mut last: Option<(ObjectObservation, ObjectObservation)> = None;
    for (k, &t) in epochs.iter().enumerate().take(max_records) {
        let u_target: f64 = rng.random();
        let u_chaser: f64 = rng.random();
        let fresh_t = k == 0 || u_target < target_sensor.update_probability;
        let fresh_c = k == 0 || u_chaser < chaser_sensor.update_probability;
        let ot = match (&last, fresh_t) {
            (Some((prev, _)), false) => *prev,
            _ => (observe_object(t_el, t, target_sensor, spec, rng)?, t),
        };
        let oc = match (&last, fresh_c) {
            (Some((_, prev)), false) => *prev,
            _ => (observe_object(c_el, t, chaser_sensor, spec, rng)?, t),
        };
        last = Some((ot, oc));
        out.push((t, ot, oc));
    }
    Ok(out)
}

fn rescreen(
    event: &ConjunctionEvent,
    ot: &Observation,
    oc: &Observation,
    params: &IssueParams,
    spec: &PropagatorSpec,
) -> Result<Encounter, CdmError> {
    let nt = nominal(ot, event.target_elements.bstar, spec)?;
    let nc = nominal(oc, event.chaser_elements.bstar, spec)?;
    let half = params.rescreen_half_width_s;
    let bracket = (event.tca - half, event.tca + half);
    let found = screen_ephemerides(&nt, &nc, bracket, f64::INFINITY, params.rescreen_step_s)?;
    Ok(found
        .iter()
        .min_by(|a, b| a.miss_distance.total_cmp(&b.miss_distance))
        .copied()
        .expect("an infinite threshold always yields a minimum"))
}

/// The re-screened TCA, miss distance and states of the first `max_records`
/// messages of a series. Consumes `rng` exactly as [`issue_cdm_series`] does up
/// to that point, so the estimates equal those of the full series.
#[allow(clippy::too_many_arguments)]
pub fn issue_cdm_estimates<R: Rng + RngCore + ?Sized>(
    event: &ConjunctionEvent,
    target_sensor: &SensorModel,
    chaser_sensor: &SensorModel,
    params: &IssueParams,
    spec: &PropagatorSpec,
    window: (Epoch, Epoch),
    max_records: usize,
    rng: &mut R,
) -> Result<Vec<CdmEstimate>, CdmError> {
    check_request(event, target_sensor, chaser_sensor, params, window)?;
    let obs = draw_observations(event, target_sensor, chaser_sensor, params, spec, window, max_records, rng)?;
    obs.iter()
        .map(|(t, (ot, _), (oc, _))| {
            let enc = rescreen(event, ot, oc, params, spec)?;
            Ok(CdmEstimate {
                creation_epoch: *t,
                tca_estimate: enc.tca,
                miss_distance_estimate: enc.miss_distance,
                target_state: enc.target_state,
                chaser_state: enc.chaser_state,
            })
        })
        .collect()
}

/// Issues the CDM time series for a ground-truth conjunction.
///
/// At every creation epoch each object is freshly observed with its sensor's
/// update probability (both objects are observed for the first message);
/// otherwise its last observation is reused. The two observed trajectories are
/// re-screened within `rescreen_half_width_s` of the true TCA to estimate TCA,
/// miss distance and relative speed, and each observation's uncertainty is
/// propagated to the estimated TCA by Monte Carlo.
#[allow(clippy::too_many_arguments)]
pub fn issue_cdm_series<R: Rng + RngCore + ?Sized>(
    event: &ConjunctionEvent,
    event_id: &str,
    target_sensor: &SensorModel,
    chaser_sensor: &SensorModel,
    params: &IssueParams,
    spec: &PropagatorSpec,
    window: (Epoch, Epoch),
    rng: &mut R,
) -> Result<CdmSeries, CdmError> {
    check_request(event, target_sensor, chaser_sensor, params, window)?;
    let observations = draw_observations(event, target_sensor, chaser_sensor, params, spec, window, usize::MAX, rng)?;
    let (t_el, c_el) = (&event.target_elements, &event.chaser_elements);

    let mut records = Vec::with_capacity(observations.len());
    for (t, (ot, t_obs_t), (oc, t_obs_c)) in observations {
        let enc = rescreen(event, &ot, &oc, params, spec)?;
        let mc_t = propagate_uncertainty_mc(&ot.state, t_el.bstar, target_sensor, enc.tca, spec, params.n_mc, ot.mc_seed)?;
        let mc_c = propagate_uncertainty_mc(&oc.state, c_el.bstar, chaser_sensor, enc.tca, spec, params.n_mc, oc.mc_seed)?;

        let (pc, method) = match params.hard_body_radius_km {
            Some(radius) => {
                let combined = to_inertial(&mc_t.covariance_rtn, &mc_t.mean_state)?
                    + to_inertial(&mc_c.covariance_rtn, &mc_c.mean_state)?;
                let b = block_rotation(&rtn_frame(&enc.target_state)?);
                let combined_rtn = b * combined * b.transpose();
                let (dr, dv) = relative_geometry_of(&enc.target_state, &enc.chaser_state)?;
                let p = collision_probability_2d(&dr, &dv, &combined_rtn, radius)?;
                (Some(p.probability), Some(PC_METHOD.to_string()))
            }
            None => (None, None),
        };

        records.push(CdmRecord {
            creation_epoch: t,
            tca_estimate: enc.tca,
            miss_distance_estimate: enc.miss_distance,
            relative_speed_estimate: enc.relative_speed(),
            target: ObjectReport {
                state_at_tca: enc.target_state,
                covariance_rtn: mc_t.covariance_rtn,
                observation_age: t - t_obs_t,
            },
            chaser: ObjectReport {
                state_at_tca: enc.chaser_state,
                covariance_rtn: mc_c.covariance_rtn,
                observation_age: t - t_obs_c,
            },
            collision_probability: pc,
            collision_probability_method: method,
        });
    }
    Ok(CdmSeries {
        event_id: event_id.to_string(),
        ground_truth: Some(*event),
        records,
    })
}
