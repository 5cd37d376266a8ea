//! Analytic mean-element propagation: two-body motion with optional first-order
//! J2 secular rates and a linear semi-major-axis drag decay.
//!
//! The [`Ephemeris`] trait is the seam the rest of the crate works against, so a
//! different propagator can be slotted in without touching screening or CDM code.

use serde::{Deserialize, Serialize};

use crate::astro::{elements_to_state_unchecked, mean_motion_rad_s, normalize_angle, Epoch, OrbitalElements, StateVector};
use crate::constants::{EARTH_RADIUS, J2, MU_EARTH, SECONDS_PER_DAY};

/// Maximum backward propagation span, seconds.
pub const MAX_BACKWARD_S: f64 = 7.0 * SECONDS_PER_DAY;
/// Reference bstar at which `drag_decay_per_day` applies unscaled.
pub const REFERENCE_BSTAR: f64 = 1e-4;
pub const DEFAULT_DRAG_DECAY_PER_DAY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagatorKind {
    TwoBody,
    TwoBodyJ2,
    TwoBodyJ2Drag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSpec {
    pub kind: PropagatorKind,
    /// Semi-major-axis decay in km/day at bstar = 1e-4; only used by the drag kind.
    #[serde(default = "default_decay")]
    pub drag_decay_per_day: f64,
}

fn default_decay() -> f64 {
    DEFAULT_DRAG_DECAY_PER_DAY
}

impl Default for PropagatorSpec {
    fn default() -> Self {
        PropagatorSpec {
            kind: PropagatorKind::TwoBodyJ2Drag,
            drag_decay_per_day: DEFAULT_DRAG_DECAY_PER_DAY,
        }
    }
}

impl PropagatorSpec {
    pub fn two_body() -> Self {
        PropagatorSpec {
            kind: PropagatorKind::TwoBody,
            drag_decay_per_day: 0.0,
        }
    }

    pub fn two_body_j2() -> Self {
        PropagatorSpec {
            kind: PropagatorKind::TwoBodyJ2,
            drag_decay_per_day: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(self.drag_decay_per_day.is_finite() && self.drag_decay_per_day >= 0.0) {
            return Err(PropagationError::InvalidSpec(format!(
                "drag_decay_per_day must be >= 0, got {}",
                self.drag_decay_per_day
            )));
        }
        Ok(())
    }

    /// The force-model coefficients this spec stands for.
    pub fn secular_model(&self) -> SecularModel {
        match self.kind {
            PropagatorKind::TwoBody => SecularModel { j2: 0.0, drag_decay_per_day: 0.0 },
            PropagatorKind::TwoBodyJ2 => SecularModel { j2: J2, drag_decay_per_day: 0.0 },
            PropagatorKind::TwoBodyJ2Drag => SecularModel {
                j2: J2,
                drag_decay_per_day: self.drag_decay_per_day,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagationError {
    #[error("object decayed at {epoch}: semi-major axis {semi_major_axis_km:.3} km")]
    Decay { epoch: Epoch, semi_major_axis_km: f64 },
    #[error("backward propagation of {span_s:.1} s exceeds the {MAX_BACKWARD_S} s limit")]
    BackwardTooFar { span_s: f64 },
    #[error("invalid propagator input: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Elements(#[from] crate::astro::AstroError),
}

/// Coefficients of the secular model: the J2 value used for the rates and the
/// drag decay rate. `SecularModel { j2: 0.0, drag_decay_per_day: 0.0 }` is pure
/// two-body motion and goes through the same arithmetic as every other kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularModel {
    pub j2: f64,
    pub drag_decay_per_day: f64,
}

/// First-order secular rates (rad/s) of node, argument of perigee and mean anomaly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRates {
    pub raan_dot: f64,
    pub arg_perigee_dot: f64,
    pub mean_anomaly_dot: f64,
}

/// J2 secular rates for the given elements. `mean_anomaly_dot` includes the mean motion.
pub fn j2_secular_rates(el: &OrbitalElements, j2: f64) -> SecularRates {
    let n = el.mean_motion_rad_s();
    let (raan_dot, arg_perigee_dot, m_corr) = j2_rate_factors(el, j2);
    SecularRates {
        raan_dot: n * raan_dot,
        arg_perigee_dot: n * arg_perigee_dot,
        mean_anomaly_dot: n * (1.0 + m_corr),
    }
}

/// Rates divided by the mean motion.
fn j2_rate_factors(el: &OrbitalElements, j2: f64) -> (f64, f64, f64) {
    let e2 = el.eccentricity * el.eccentricity;
    let p = el.semi_major_axis * (1.0 - e2);
    let k = j2 * (EARTH_RADIUS / p).powi(2);
    let ci = el.inclination.cos();
    let c2 = ci * ci;
    (
        -1.5 * k * ci,
        0.75 * k * (5.0 * c2 - 1.0),
        0.75 * k * (1.0 - e2).sqrt() * (3.0 * c2 - 1.0),
    )
}

/// `((1 − x)^(−p) − 1) / (p x)`, the growth factor of `∫ (a0 − k t)^(−p−1)` relative
/// to the constant-`a` integral; evaluated without cancellation for small `x`.
fn decay_integral_factor(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (-p * (-x).ln_1p()).exp_m1() / (p * x)
    }
}

/// Elements advanced to `to` under `model`.
pub fn propagate_elements_with(
    el: &OrbitalElements,
    to: Epoch,
    model: SecularModel,
) -> Result<OrbitalElements, PropagationError> {
    let dt = to - el.epoch;
    if dt < -MAX_BACKWARD_S {
        return Err(PropagationError::BackwardTooFar { span_s: -dt });
    }
    let a0 = el.semi_major_axis;
    let decay_rate = (el.bstar / REFERENCE_BSTAR) * model.drag_decay_per_day / SECONDS_PER_DAY;
    let shrink = decay_rate * dt;
    let a = a0 - shrink;
    if !(a > EARTH_RADIUS) {
        return Err(PropagationError::Decay {
            epoch: to,
            semi_major_axis_km: a,
        });
    }
    let x = shrink / a0;
    let n0 = el.mean_motion_rad_s();
    let (raan_f, argp_f, m_corr) = j2_rate_factors(el, model.j2);
    // n ∝ a^(-3/2); the J2 rates additionally carry p^(-2) ∝ a^(-2).
    let g_n = decay_integral_factor(x, 0.5);
    let g_j2 = decay_integral_factor(x, 2.5);
    let phase = n0 * dt * g_n;
    let j2_phase = n0 * dt * g_j2;
    Ok(OrbitalElements {
        semi_major_axis: a,
        eccentricity: el.eccentricity,
        inclination: el.inclination,
        raan: normalize_angle(el.raan + raan_f * j2_phase),
        arg_perigee: normalize_angle(el.arg_perigee + argp_f * j2_phase),
        mean_anomaly: normalize_angle(el.mean_anomaly + phase + m_corr * j2_phase),
        epoch: to,
        bstar: el.bstar,
    })
}

pub fn propagate_elements(
    el: &OrbitalElements,
    to: Epoch,
    spec: &PropagatorSpec,
) -> Result<OrbitalElements, PropagationError> {
    propagate_elements_with(el, to, spec.secular_model())
}

/// State of the object described by `el` at epoch `to`.
pub fn propagate(el: &OrbitalElements, to: Epoch, spec: &PropagatorSpec) -> Result<StateVector, PropagationError> {
    spec.validate()?;
    el.validate()?;
    propagate_elements(el, to, spec).map(|e| elements_to_state_unchecked(&e))
}

/// Samples `propagate` on `start + k·step` for `k = 0..=floor((end − start)/step)`.
pub fn propagate_ephemeris(
    el: &OrbitalElements,
    start: Epoch,
    end: Epoch,
    step: f64,
    spec: &PropagatorSpec,
) -> Result<Vec<StateVector>, PropagationError> {
    let count = ephemeris_len(start, end, step)?;
    spec.validate()?;
    el.validate()?;
    (0..count)
        .map(|k| {
            let t = start + k as f64 * step;
            propagate_elements(el, t, spec).map(|e| elements_to_state_unchecked(&e))
        })
        .collect()
}

/// Number of samples in an ephemeris grid.
pub fn ephemeris_len(start: Epoch, end: Epoch, step: f64) -> Result<usize, PropagationError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(PropagationError::InvalidSpec(format!("step must be positive, got {step}")));
    }
    let span = end - start;
    if !(span >= 0.0) {
        return Err(PropagationError::InvalidSpec(format!("window end {end} precedes start {start}")));
    }
    Ok((span / step).floor() as usize + 1)
}

/// A source of states over time.
pub trait Ephemeris {
    fn state_at(&self, t: Epoch) -> Result<StateVector, PropagationError>;

    /// Upper bound on the speed (km/s) over `[start, end]`; used to skip grid points
    /// that cannot be near a close approach.
    fn speed_bound(&self, start: Epoch, end: Epoch) -> f64;

    /// Bounds on the orbital radius (km) over `[start, end]`, if known.
    fn radius_bounds(&self, _start: Epoch, _end: Epoch) -> Option<(f64, f64)> {
        None
    }
}

/// Elements plus a propagator, viewed as an ephemeris.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagated {
    pub elements: OrbitalElements,
    pub spec: PropagatorSpec,
}

impl Propagated {
    pub fn new(elements: OrbitalElements, spec: PropagatorSpec) -> Result<Self, PropagationError> {
        elements.validate()?;
        spec.validate()?;
        Ok(Propagated { elements, spec })
    }

    fn semi_major_axis_range(&self, start: Epoch, end: Epoch) -> (f64, f64) {
        let model = self.spec.secular_model();
        let rate = (self.elements.bstar / REFERENCE_BSTAR) * model.drag_decay_per_day / SECONDS_PER_DAY;
        let a0 = self.elements.semi_major_axis;
        let a_start = a0 - rate * (start - self.elements.epoch);
        let a_end = a0 - rate * (end - self.elements.epoch);
        (a_start.min(a_end), a_start.max(a_end))
    }
}

impl Ephemeris for Propagated {
    fn state_at(&self, t: Epoch) -> Result<StateVector, PropagationError> {
        propagate_elements(&self.elements, t, &self.spec).map(|e| elements_to_state_unchecked(&e))
    }

    fn speed_bound(&self, start: Epoch, end: Epoch) -> f64 {
        let (a_min, a_max) = self.semi_major_axis_range(start, end);
        let el = &self.elements;
        let e = el.eccentricity;
        let a_min = a_min.max(EARTH_RADIUS);
        let model = self.spec.secular_model();
        let (raan_f, argp_f, m_corr) = j2_rate_factors(el, model.j2);
        // J2 rates scale as n·a^-2 along the decayed orbit
        let n_max = mean_motion_rad_s(a_min) * (el.semi_major_axis / a_min).powi(2);
        let v_perigee = (MU_EARTH * (1.0 + e) / (a_min * (1.0 - e))).sqrt();
        let in_orbit = v_perigee * (1.0 + m_corr.abs() * (el.semi_major_axis / a_min).powi(2));
        let rotation = n_max * (raan_f.abs() + argp_f.abs()) * a_max * (1.0 + e);
        let decay = (1.0 + e) * (el.bstar / REFERENCE_BSTAR).abs() * model.drag_decay_per_day / SECONDS_PER_DAY;
        (in_orbit + rotation + decay) * (1.0 + 1e-9)
    }

    fn radius_bounds(&self, start: Epoch, end: Epoch) -> Option<(f64, f64)> {
        let (a_min, a_max) = self.semi_major_axis_range(start, end);
        let e = self.elements.eccentricity;
        Some((a_min * (1.0 - e), a_max * (1.0 + e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::elements_to_state;

    fn leo(incl: f64) -> OrbitalElements {
        OrbitalElements::new(7000.0, 0.001, incl, 0.3, 1.0, 2.0, Epoch::ZERO, 1e-4).unwrap()
    }

    #[test]
    fn two_body_is_periodic() {
        let el = leo(0.9);
        let sv = propagate(&el, Epoch::from_seconds(el.period_s()), &PropagatorSpec::two_body()).unwrap();
        let sv0 = elements_to_state(&el).unwrap();
        assert!((sv.position - sv0.position).norm() < 1e-6);
    }

    #[test]
    fn critical_inclination_freezes_perigee() {
        let incl = (1.0_f64 / 5.0).sqrt().acos();
        assert!((incl.to_degrees() - 63.43).abs() < 0.01);
        let rates = j2_secular_rates(&leo(incl), J2);
        assert!(rates.arg_perigee_dot.abs() < 1e-18);
        let moved = propagate_elements(&leo(incl), Epoch::from_days(1.0), &PropagatorSpec::two_body_j2()).unwrap();
        assert!(crate::astro::angular_distance(moved.arg_perigee, 1.0) < 1e-12);
        assert!(crate::astro::angular_distance(moved.raan, 0.3) > 1e-3);
    }

    #[test]
    fn node_regresses_for_prograde_orbits() {
        assert!(j2_secular_rates(&leo(0.5), J2).raan_dot < 0.0);
        assert!(j2_secular_rates(&leo(2.5), J2).raan_dot > 0.0);
        let sso = j2_secular_rates(&OrbitalElements::new(7078.0, 0.001, 98.2f64.to_radians(), 0.0, 0.0, 0.0, Epoch::ZERO, 0.0).unwrap(), J2);
        let deg_per_day = sso.raan_dot.to_degrees() * SECONDS_PER_DAY;
        assert!((deg_per_day - 0.9856).abs() < 0.02, "{deg_per_day}");
    }

    #[test]
    fn secular_model_without_forces_reproduces_two_body_exactly() {
        let el = leo(1.2);
        let zero = SecularModel { j2: 0.0, drag_decay_per_day: 0.0 };
        for k in 0..50 {
            let t = Epoch::from_seconds(k as f64 * 1234.5 - 20000.0);
            let a = propagate_elements_with(&el, t, zero).unwrap();
            let b = propagate_elements(&el, t, &PropagatorSpec::two_body()).unwrap();
            assert_eq!(a, b);
            let drag_kind_off = PropagatorSpec { kind: PropagatorKind::TwoBodyJ2Drag, drag_decay_per_day: 0.0 };
            let c = propagate_elements(&el, t, &drag_kind_off).unwrap();
            let d = propagate_elements(&el, t, &PropagatorSpec::two_body_j2()).unwrap();
            assert_eq!(c, d);
        }
    }

    #[test]
    fn drag_decays_semi_major_axis_linearly() {
        let el = leo(1.0);
        let spec = PropagatorSpec::default();
        let moved = propagate_elements(&el, Epoch::from_days(2.0), &spec).unwrap();
        assert!((el.semi_major_axis - moved.semi_major_axis - 0.1).abs() < 1e-9);
        let back = propagate_elements(&el, Epoch::from_days(-2.0), &spec).unwrap();
        assert!((back.semi_major_axis - el.semi_major_axis - 0.1).abs() < 1e-9);
        let mut heavy = el;
        heavy.bstar = 1e-4;
        heavy.semi_major_axis = EARTH_RADIUS + 0.2;
        let err = propagate(&heavy, Epoch::from_days(7.0), &spec).unwrap_err();
        assert!(matches!(err, PropagationError::Decay { .. }));
    }

    #[test]
    fn drag_phase_is_consistent_across_restarts() {
        let mut el = leo(1.0);
        el.bstar = 8e-4;
        let spec = PropagatorSpec::default();
        let direct = propagate(&el, Epoch::from_days(5.0), &spec).unwrap();
        let mid = propagate_elements(&el, Epoch::from_days(2.0), &spec).unwrap();
        let restarted = propagate(&mid, Epoch::from_days(5.0), &spec).unwrap();
        assert!((direct.position - restarted.position).norm() < 1e-6);
    }

    #[test]
    fn tiny_decay_rates_do_not_lose_phase() {
        let mut el = leo(1.0);
        el.bstar = 1e-12;
        let spec = PropagatorSpec::default();
        let with = propagate(&el, Epoch::from_days(7.0), &spec).unwrap();
        let without = propagate(&el, Epoch::from_days(7.0), &PropagatorSpec::two_body_j2()).unwrap();
        assert!((with.position - without.position).norm() < 1e-4);
    }

    #[test]
    fn backward_limit_enforced() {
        let el = leo(1.0);
        assert!(propagate(&el, Epoch::from_days(-6.9), &PropagatorSpec::default()).is_ok());
        assert!(matches!(
            propagate(&el, Epoch::from_days(-7.1), &PropagatorSpec::default()),
            Err(PropagationError::BackwardTooFar { .. })
        ));
    }

    #[test]
    fn ephemeris_shapes() {
        let el = leo(1.0);
        let spec = PropagatorSpec::default();
        let single = propagate_ephemeris(&el, Epoch::ZERO, Epoch::ZERO, 10.0, &spec).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(ephemeris_len(Epoch::ZERO, Epoch::from_days(7.0), 10.0).unwrap(), 60_481);
        let eph = propagate_ephemeris(&el, Epoch::ZERO, Epoch::from_seconds(600.0), 10.0, &spec).unwrap();
        assert_eq!(eph.len(), 61);
        for (k, sv) in eph.iter().enumerate() {
            let p = propagate(&el, Epoch::from_seconds(k as f64 * 10.0), &spec).unwrap();
            assert_eq!(*sv, p);
        }
        assert!(propagate_ephemeris(&el, Epoch::ZERO, Epoch::from_seconds(10.0), 0.0, &spec).is_err());
    }

    #[test]
    fn negative_decay_rate_rejected() {
        let spec = PropagatorSpec { kind: PropagatorKind::TwoBodyJ2Drag, drag_decay_per_day: -1.0 };
        assert!(propagate(&leo(1.0), Epoch::ZERO, &spec).is_err());
    }
}
