use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::kepler::{eccentric_to_true, solve_kepler, true_to_eccentric};
use super::{normalize_angle, AstroError, Epoch};
use crate::constants::{EARTH_RADIUS, MU_EARTH, SECONDS_PER_DAY, TWO_PI};

/// Below this eccentricity (inclination) the argument of perigee (node) is
/// undefined and is folded into the next angle.
pub const DEGENERATE_ANGLE_TOL: f64 = 1e-11;

/// Osculating/mean Keplerian elements of one object at an epoch.
///
/// Angles are radians; `raan`, `arg_perigee` and `mean_anomaly` are kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    /// km
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    pub epoch: Epoch,
    /// Drag-like coefficient, 1/earth-radii.
    pub bstar: f64,
}

impl OrbitalElements {
    /// Builds and validates a set of elements, normalizing the three angles.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        semi_major_axis: f64,
        eccentricity: f64,
        inclination: f64,
        raan: f64,
        arg_perigee: f64,
        mean_anomaly: f64,
        epoch: Epoch,
        bstar: f64,
    ) -> Result<Self, AstroError> {
        let el = OrbitalElements {
            semi_major_axis,
            eccentricity,
            inclination,
            raan: normalize_angle(raan),
            arg_perigee: normalize_angle(arg_perigee),
            mean_anomaly: normalize_angle(mean_anomaly),
            epoch,
            bstar,
        };
        el.validate()?;
        Ok(el)
    }

    /// Same as [`OrbitalElements::new`] but with the size given as mean motion in rev/day.
    #[allow(clippy::too_many_arguments)]
    pub fn from_mean_motion_rev_day(
        mean_motion_rev_day: f64,
        eccentricity: f64,
        inclination: f64,
        raan: f64,
        arg_perigee: f64,
        mean_anomaly: f64,
        epoch: Epoch,
        bstar: f64,
    ) -> Result<Self, AstroError> {
        if !(mean_motion_rev_day.is_finite() && mean_motion_rev_day > 0.0) {
            return Err(AstroError::InvalidElements(format!(
                "mean motion {mean_motion_rev_day} rev/day must be positive"
            )));
        }
        Self::new(
            semi_major_axis_from_mean_motion_rev_day(mean_motion_rev_day),
            eccentricity,
            inclination,
            raan,
            arg_perigee,
            mean_anomaly,
            epoch,
            bstar,
        )
    }

    pub fn validate(&self) -> Result<(), AstroError> {
        let bad = |msg: String| Err(AstroError::InvalidElements(msg));
        let all_finite = [
            self.semi_major_axis,
            self.eccentricity,
            self.inclination,
            self.raan,
            self.arg_perigee,
            self.mean_anomaly,
            self.bstar,
        ]
        .iter()
        .all(|v| v.is_finite())
            && self.epoch.is_finite();
        if !all_finite {
            return bad(format!("non-finite element in {self:?}"));
        }
        if self.semi_major_axis <= EARTH_RADIUS {
            return bad(format!(
                "semi-major axis {} km is not above the Earth radius",
                self.semi_major_axis
            ));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return bad(format!("eccentricity {} outside [0, 1)", self.eccentricity));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.inclination) {
            return bad(format!("inclination {} outside [0, pi]", self.inclination));
        }
        for (name, v) in [
            ("raan", self.raan),
            ("arg_perigee", self.arg_perigee),
            ("mean_anomaly", self.mean_anomaly),
        ] {
            if !(0.0..TWO_PI).contains(&v) {
                return bad(format!("{name} {v} not normalized to [0, 2pi)"));
            }
        }
        Ok(())
    }

    pub fn mean_motion_rad_s(&self) -> f64 {
        mean_motion_rad_s(self.semi_major_axis)
    }

    pub fn mean_motion_rev_day(&self) -> f64 {
        self.mean_motion_rad_s() * SECONDS_PER_DAY / TWO_PI
    }

    pub fn period_s(&self) -> f64 {
        TWO_PI / self.mean_motion_rad_s()
    }

    pub fn perigee_radius(&self) -> f64 {
        self.semi_major_axis * (1.0 - self.eccentricity)
    }

    pub fn apogee_radius(&self) -> f64 {
        self.semi_major_axis * (1.0 + self.eccentricity)
    }
}

pub fn mean_motion_rad_s(semi_major_axis: f64) -> f64 {
    (MU_EARTH / (semi_major_axis * semi_major_axis * semi_major_axis)).sqrt()
}

pub fn semi_major_axis_from_mean_motion_rad_s(n: f64) -> f64 {
    (MU_EARTH / (n * n)).cbrt()
}

pub fn semi_major_axis_from_mean_motion_rev_day(n_rev_day: f64) -> f64 {
    semi_major_axis_from_mean_motion_rad_s(n_rev_day * TWO_PI / SECONDS_PER_DAY)
}

pub fn mean_motion_rev_day(semi_major_axis: f64) -> f64 {
    mean_motion_rad_s(semi_major_axis) * SECONDS_PER_DAY / TWO_PI
}

/// Inertial position (km) and velocity (km/s) at an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub epoch: Epoch,
}

impl StateVector {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, epoch: Epoch) -> Self {
        StateVector {
            position,
            velocity,
            epoch,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite()) && self.epoch.is_finite()
    }

    /// v²/2 − μ/r, km²/s².
    pub fn specific_energy(&self) -> f64 {
        0.5 * self.velocity.norm_squared() - MU_EARTH / self.position.norm()
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.position.cross(&self.velocity)
    }

    /// Position and velocity stacked into one 6-vector.
    pub fn to_array(&self) -> [f64; 6] {
        let (r, v) = (&self.position, &self.velocity);
        [r.x, r.y, r.z, v.x, v.y, v.z]
    }
}

/// Unit vectors of the perifocal frame (P toward perigee, Q 90° ahead in the orbit plane).
fn perifocal_axes(raan: f64, inclination: f64, arg_perigee: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (so, co) = raan.sin_cos();
    let (si, ci) = inclination.sin_cos();
    let (sw, cw) = arg_perigee.sin_cos();
    let p = Vector3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
    let q = Vector3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);
    (p, q)
}

pub fn elements_to_state(el: &OrbitalElements) -> Result<StateVector, AstroError> {
    el.validate()?;
    Ok(elements_to_state_unchecked(el))
}

/// Conversion without re-validating; callers guarantee the invariants.
pub(crate) fn elements_to_state_unchecked(el: &OrbitalElements) -> StateVector {
    let a = el.semi_major_axis;
    let e = el.eccentricity;
    // Valid elements always converge.
    let big_e = solve_kepler(el.mean_anomaly, e).unwrap_or(el.mean_anomaly);
    let (s, c) = big_e.sin_cos();
    let beta = (1.0 - e * e).sqrt();
    let r = a * (1.0 - e * c);
    let x_pf = a * (c - e);
    let y_pf = a * beta * s;
    let vfac = (MU_EARTH * a).sqrt() / r;
    let vx_pf = -vfac * s;
    let vy_pf = vfac * beta * c;
    let (p, q) = perifocal_axes(el.raan, el.inclination, el.arg_perigee);
    StateVector {
        position: p * x_pf + q * y_pf,
        velocity: p * vx_pf + q * vy_pf,
        epoch: el.epoch,
    }
}

/// Converts a bound inertial state to Keplerian elements.
///
/// Degenerate angles: with `e < 1e-11` the argument of perigee is set to zero and
/// the phase is carried by the mean anomaly; with the orbit equatorial to within
/// `1e-11` rad the node is set to zero and folded into the argument of perigee.
/// `bstar` is not observable from a state and is set to zero; use
/// [`state_to_elements_with_bstar`] to carry it along.
pub fn state_to_elements(sv: &StateVector) -> Result<OrbitalElements, AstroError> {
    state_to_elements_with_bstar(sv, 0.0)
}

pub fn state_to_elements_with_bstar(sv: &StateVector, bstar: f64) -> Result<OrbitalElements, AstroError> {
    if !sv.is_finite() {
        return Err(AstroError::Conversion("non-finite state".into()));
    }
    let r = sv.position;
    let v = sv.velocity;
    let rmag = r.norm();
    let vmag = v.norm();
    if rmag == 0.0 {
        return Err(AstroError::Conversion("zero position vector".into()));
    }
    let h = r.cross(&v);
    let hmag = h.norm();
    if hmag <= 1e-12 * rmag * vmag.max(f64::MIN_POSITIVE) || hmag == 0.0 {
        return Err(AstroError::Conversion("rectilinear state (zero angular momentum)".into()));
    }
    let energy = 0.5 * vmag * vmag - MU_EARTH / rmag;
    if energy >= 0.0 {
        return Err(AstroError::Conversion(format!(
            "unbound state (specific energy {energy} km^2/s^2)"
        )));
    }
    let a = -MU_EARTH / (2.0 * energy);
    let e_vec = (r * (vmag * vmag - MU_EARTH / rmag) - v * r.dot(&v)) / MU_EARTH;
    let e = e_vec.norm();
    if e >= 1.0 {
        return Err(AstroError::Conversion(format!("eccentricity {e} is not elliptic")));
    }
    let h_hat = h / hmag;
    let inclination = h_hat.z.clamp(-1.0, 1.0).acos();

    let equatorial =
        inclination < DEGENERATE_ANGLE_TOL || std::f64::consts::PI - inclination < DEGENERATE_ANGLE_TOL;
    let (raan, node_hat) = if equatorial {
        (0.0, Vector3::x())
    } else {
        let n = Vector3::new(-h.y, h.x, 0.0);
        (n.y.atan2(n.x), n.normalize())
    };
    let q_hat = h_hat.cross(&node_hat);
    let arg_perigee = if e < DEGENERATE_ANGLE_TOL {
        0.0
    } else {
        e_vec.dot(&q_hat).atan2(e_vec.dot(&node_hat))
    };
    let arg_latitude = r.dot(&q_hat).atan2(r.dot(&node_hat));
    let true_anomaly = arg_latitude - arg_perigee;
    let big_e = true_to_eccentric(true_anomaly, e);
    let mean_anomaly = big_e - e * big_e.sin();

    let el = OrbitalElements {
        semi_major_axis: a,
        eccentricity: e,
        inclination,
        raan: normalize_angle(raan),
        arg_perigee: normalize_angle(arg_perigee),
        mean_anomaly: normalize_angle(mean_anomaly),
        epoch: sv.epoch,
        bstar,
    };
    if a <= EARTH_RADIUS {
        return Err(AstroError::Conversion(format!(
            "semi-major axis {a} km is not above the Earth radius"
        )));
    }
    Ok(el)
}

/// True anomaly of the elements at their epoch.
pub fn true_anomaly(el: &OrbitalElements) -> Result<f64, AstroError> {
    let big_e = solve_kepler(el.mean_anomaly, el.eccentricity)?;
    Ok(normalize_angle(eccentric_to_true(big_e, el.eccentricity)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::angular_distance;

    #[test]
    fn circular_equatorial_geometry() {
        let el = OrbitalElements::new(7000.0, 0.0, 0.0, 0.0, 0.0, 0.0, Epoch::ZERO, 0.0).unwrap();
        let sv = elements_to_state(&el).unwrap();
        assert!((sv.position - Vector3::new(7000.0, 0.0, 0.0)).norm() < 1e-9);
        let speed = (MU_EARTH / 7000.0).sqrt();
        assert!((sv.velocity - Vector3::new(0.0, speed, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn energy_matches_vis_viva() {
        let el = OrbitalElements::new(7000.0, 0.01, 0.9, 1.0, 2.0, 3.0, Epoch::ZERO, 0.0).unwrap();
        let sv = elements_to_state(&el).unwrap();
        let expected = -MU_EARTH / (2.0 * el.semi_major_axis);
        assert!(((sv.specific_energy() - expected) / expected).abs() < 1e-9);
        let r = sv.position.norm();
        assert!(r >= el.perigee_radius() - 1e-9 && r <= el.apogee_radius() + 1e-9);
    }

    #[test]
    fn round_trip_reference_case() {
        let el = OrbitalElements::new(7000.0, 0.01, 0.9, 1.0, 2.0, 3.0, Epoch::ZERO, 0.0).unwrap();
        let back = state_to_elements(&elements_to_state(&el).unwrap()).unwrap();
        assert!((back.semi_major_axis - el.semi_major_axis).abs() / el.semi_major_axis < 1e-10);
        assert!((back.eccentricity - el.eccentricity).abs() < 1e-10);
        assert!((back.inclination - el.inclination).abs() < 1e-10);
        for (x, y) in [
            (back.raan, el.raan),
            (back.arg_perigee, el.arg_perigee),
            (back.mean_anomaly, el.mean_anomaly),
        ] {
            assert!(angular_distance(x, y) < 1e-10);
        }
    }

    /// Textbook vector formulas, written independently of `state_to_elements`.
    fn vector_formula_oracle(r: Vector3<f64>, v: Vector3<f64>) -> [f64; 6] {
        let mu = MU_EARTH;
        let h = r.cross(&v);
        let n = Vector3::z().cross(&h);
        let e_vec = v.cross(&h) / mu - r / r.norm();
        let e = e_vec.norm();
        let a = 1.0 / (2.0 / r.norm() - v.norm_squared() / mu);
        let i = (h.z / h.norm()).acos();
        let mut raan = (n.x / n.norm()).acos();
        if n.y < 0.0 {
            raan = TWO_PI - raan;
        }
        let mut argp = (n.dot(&e_vec) / (n.norm() * e)).clamp(-1.0, 1.0).acos();
        if e_vec.z < 0.0 {
            argp = TWO_PI - argp;
        }
        let mut nu = (e_vec.dot(&r) / (e * r.norm())).clamp(-1.0, 1.0).acos();
        if r.dot(&v) < 0.0 {
            nu = TWO_PI - nu;
        }
        let big_e = 2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (nu / 2.0).tan()).atan();
        let m = normalize_angle(big_e - e * big_e.sin());
        [a, e, i, raan, argp, m]
    }

    #[test]
    fn matches_vector_formula_oracle() {
        let states = [
            (Vector3::new(6524.834, 6862.875, 6448.296), Vector3::new(4.901327, 5.533756, -1.976341)),
            (Vector3::new(-4000.0, 5200.0, 1200.0), Vector3::new(-5.8, -4.4, 3.6)),
            (Vector3::new(7100.0, -300.0, 2500.0), Vector3::new(1.0, 7.1, -1.4)),
        ];
        for (r, v) in states {
            let sv = StateVector::new(r, v, Epoch::ZERO);
            let el = state_to_elements(&sv).unwrap();
            let o = vector_formula_oracle(r, v);
            assert!((el.semi_major_axis - o[0]).abs() / o[0] < 1e-12);
            assert!((el.eccentricity - o[1]).abs() < 1e-12);
            assert!((el.inclination - o[2]).abs() < 1e-10);
            assert!(angular_distance(el.raan, o[3]) < 1e-10);
            assert!(angular_distance(el.arg_perigee, o[4]) < 1e-8);
            assert!(angular_distance(el.mean_anomaly, o[5]) < 1e-8);
        }
    }

    #[test]
    fn circular_equatorial_state_resolves_degenerate_angles() {
        let speed = (MU_EARTH / 7000.0).sqrt();
        let angle = 0.7_f64;
        let sv = StateVector::new(
            Vector3::new(7000.0 * angle.cos(), 7000.0 * angle.sin(), 0.0),
            Vector3::new(-speed * angle.sin(), speed * angle.cos(), 0.0),
            Epoch::ZERO,
        );
        let el = state_to_elements(&sv).unwrap();
        assert!(el.eccentricity < 1e-12);
        assert!(el.inclination < 1e-12);
        assert_eq!(el.raan, 0.0);
        assert_eq!(el.arg_perigee, 0.0);
        assert!(angular_distance(el.mean_anomaly, angle) < 1e-12);
    }

    #[test]
    fn retrograde_equatorial_round_trip() {
        let el = OrbitalElements::new(7200.0, 0.05, std::f64::consts::PI, 0.0, 1.2, 0.4, Epoch::ZERO, 0.0).unwrap();
        let sv = elements_to_state(&el).unwrap();
        let back = state_to_elements(&sv).unwrap();
        let sv2 = elements_to_state(&back).unwrap();
        assert!((sv2.position - sv.position).norm() < 1e-6);
        assert!((sv2.velocity - sv.velocity).norm() < 1e-9);
    }

    #[test]
    fn unbound_and_rectilinear_states_fail() {
        let escape = StateVector::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::new(0.0, 11.0, 0.0), Epoch::ZERO);
        assert!(matches!(state_to_elements(&escape), Err(AstroError::Conversion(_))));
        let radial = StateVector::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Epoch::ZERO);
        assert!(matches!(state_to_elements(&radial), Err(AstroError::Conversion(_))));
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(OrbitalElements::new(6000.0, 0.0, 0.0, 0.0, 0.0, 0.0, Epoch::ZERO, 0.0).is_err());
        assert!(OrbitalElements::new(7000.0, 1.0, 0.0, 0.0, 0.0, 0.0, Epoch::ZERO, 0.0).is_err());
        assert!(OrbitalElements::new(7000.0, 0.1, 3.2, 0.0, 0.0, 0.0, Epoch::ZERO, 0.0).is_err());
        let el = OrbitalElements::new(7000.0, 0.1, 1.0, -1.0, 7.0, 100.0, Epoch::ZERO, 0.0).unwrap();
        assert!(el.validate().is_ok());
    }

    #[test]
    fn geostationary_mean_motion() {
        let n = mean_motion_rad_s(42164.17);
        let sidereal = TWO_PI / 86164.1;
        assert!((n - sidereal).abs() / sidereal < 1e-5, "{n} vs {sidereal}");
        let n2 = mean_motion_rad_s(2.0 * 42164.17);
        assert!((n2 / n - 2f64.powf(-1.5)).abs() < 1e-14);
        let a = semi_major_axis_from_mean_motion_rad_s(n);
        assert!((a - 42164.17).abs() / 42164.17 < 1e-12);
        let rev = mean_motion_rev_day(7000.0);
        assert!((semi_major_axis_from_mean_motion_rev_day(rev) - 7000.0).abs() / 7000.0 < 1e-12);
    }
}
