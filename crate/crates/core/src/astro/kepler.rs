//! Kepler's equation for elliptic orbits.

use std::f64::consts::PI;

use super::AstroError;
use crate::constants::TWO_PI;

const NEWTON_MAX_ITER: usize = 50;
const BISECTION_MAX_ITER: usize = 200;

/// Solves `E - e sin E = M` for the eccentric anomaly.
///
/// The result lies on the same 2π branch as `mean_anomaly`: a mean anomaly in
/// `[2πk, 2π(k+1))` yields an eccentric anomaly in the same interval.
pub fn solve_kepler(mean_anomaly: f64, eccentricity: f64) -> Result<f64, AstroError> {
    if !mean_anomaly.is_finite() || !(0.0..1.0).contains(&eccentricity) {
        return Err(AstroError::KeplerDomain {
            mean_anomaly,
            eccentricity,
        });
    }
    let turns = (mean_anomaly / TWO_PI).floor();
    let offset = turns * TWO_PI;
    let m = mean_anomaly - offset;
    if eccentricity == 0.0 {
        return Ok(mean_anomaly);
    }
    let e = eccentricity;
    let residual = |x: f64| x - e * x.sin() - m;

    let mut x = if e > 0.8 { PI } else { m };
    for _ in 0..NEWTON_MAX_ITER {
        let f = residual(x);
        let step = f / (1.0 - e * x.cos());
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            let r = residual(x);
            if r.abs() <= 1e-13 && (0.0..=TWO_PI).contains(&x) {
                return Ok(x + offset);
            }
            break;
        }
    }

    // f is strictly increasing on [0, 2π] with f(0) <= 0 <= f(2π).
    let (mut lo, mut hi) = (0.0_f64, TWO_PI);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * 8.0 {
            return Ok(0.5 * (lo + hi) + offset);
        }
    }
    Err(AstroError::KeplerNoConvergence {
        mean_anomaly,
        eccentricity,
    })
}

pub fn eccentric_to_true(eccentric_anomaly: f64, eccentricity: f64) -> f64 {
    let (s, c) = eccentric_anomaly.sin_cos();
    let beta = (1.0 - eccentricity * eccentricity).sqrt();
    (beta * s).atan2(c - eccentricity)
}

pub fn true_to_eccentric(true_anomaly: f64, eccentricity: f64) -> f64 {
    let (s, c) = true_anomaly.sin_cos();
    let beta = (1.0 - eccentricity * eccentricity).sqrt();
    (beta * s).atan2(eccentricity + c)
}
