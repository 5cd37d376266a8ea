//! Astrodynamics primitives: epochs, Keplerian elements, state vectors, Kepler's
//! equation, element/state conversion and the RTN frame.

mod elements;
mod epoch;
mod frame;
pub mod kepler;

pub use elements::{
    elements_to_state, mean_motion_rad_s, mean_motion_rev_day, semi_major_axis_from_mean_motion_rad_s,
    semi_major_axis_from_mean_motion_rev_day, state_to_elements, state_to_elements_with_bstar, true_anomaly,
    OrbitalElements, StateVector, DEGENERATE_ANGLE_TOL,
};
pub(crate) use elements::elements_to_state_unchecked;
pub use epoch::Epoch;
pub use frame::{block_rotation, rtn_frame};
pub use kepler::solve_kepler;

use crate::constants::TWO_PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AstroError {
    #[error("Kepler equation outside domain: M={mean_anomaly}, e={eccentricity}")]
    KeplerDomain { mean_anomaly: f64, eccentricity: f64 },
    #[error("Kepler solver did not converge: M={mean_anomaly}, e={eccentricity}")]
    KeplerNoConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("invalid orbital elements: {0}")]
    InvalidElements(String),
    #[error("state conversion failed: {0}")]
    Conversion(String),
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TWO_PI);
    if y >= TWO_PI {
        0.0
    } else {
        y
    }
}

/// Shortest signed difference `a − b` on the circle, in `[−π, π)`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    if d >= std::f64::consts::PI {
        d - TWO_PI
    } else {
        d
    }
}

/// Shortest distance between two angles on the circle, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    angle_difference(a, b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(-0.5) - (TWO_PI - 0.5)).abs() < 1e-15);
        assert!(normalize_angle(-1e-20) < TWO_PI);
        assert!((normalize_angle(7.0) - (7.0 - TWO_PI)).abs() < 1e-15);
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((angular_distance(0.1, TWO_PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_difference(0.1, TWO_PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_difference(TWO_PI - 0.1, 0.1) + 0.2).abs() < 1e-12);
    }
}
