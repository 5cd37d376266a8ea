use std::f64::consts::{FRAC_PI_2, SQRT_2};

use nalgebra::{Matrix2, Matrix6, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use libm::{erf, erfc};

use super::CdmError;

pub const PC_METHOD: &str = "2D-encounter-plane";
/// Added to the diagonal of a singular projected covariance, km².
pub const PC_REGULARIZATION: f64 = 1e-12;

const QUAD_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionProbability {
    pub probability: f64,
    /// Set when the projected covariance had to be regularized.
    pub regularized: bool,
}

/// `P(a < Z < b)` for a standard normal, accurate in both tails.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        0.5 * (erf(b / SQRT_2) - erf(a / SQRT_2))
    }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature over `[a, b]`, starting from `panels` equal panels.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            let m = 0.5 * (lo + hi);
            let (flo, fhi, fm) = (f(lo), f(hi), f(m));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
            simpson(&f, lo, flo, hi, fhi, m, fm, whole, tol / panels as f64, MAX_DEPTH)
        })
        .sum()
}

/// Probability that the relative position at closest approach falls inside a
/// disc of radius `hard_body_radius` in the encounter plane.
///
/// The position block of `combined_covariance` (km², same frame as the relative
/// vectors) is projected onto the plane orthogonal to the relative velocity and
/// rotated to its principal axes. The outer integral uses `x = R sin φ` so the
/// integrand stays smooth at the edge of the disc; the inner one is closed form.
pub fn collision_probability_2d(
    relative_position: &Vector3<f64>,
    relative_velocity: &Vector3<f64>,
    combined_covariance: &Matrix6<f64>,
    hard_body_radius: f64,
) -> Result<CollisionProbability, CdmError> {
    let speed = relative_velocity.norm();
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(CdmError::Geometry("relative velocity is zero".into()));
    }
    if !(hard_body_radius >= 0.0) {
        return Err(CdmError::Geometry(format!("hard-body radius {hard_body_radius} is negative")));
    }
    let u = relative_velocity / speed;
    let along = relative_position - u * relative_position.dot(&u);
    let e1 = if along.norm() > 1e-12 * relative_position.norm().max(1e-300) {
        along.normalize()
    } else {
        let trial = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        (trial - u * trial.dot(&u)).normalize()
    };
    let e2 = u.cross(&e1);
    let pos_cov = combined_covariance.fixed_view::<3, 3>(0, 0).into_owned();
    let basis = nalgebra::Matrix3x2::from_columns(&[e1, e2]);
    let mut p: Matrix2<f64> = basis.transpose() * pos_cov * basis;
    p = 0.5 * (p + p.transpose());
    let miss = Vector2::new(relative_position.dot(&e1), relative_position.dot(&e2));

    let mut regularized = false;
    let mut eig = p.symmetric_eigen();
    if !(eig.eigenvalues.min() > 0.0) || eig.eigenvalues.min() < 1e-15 * eig.eigenvalues.max().abs() {
        p += Matrix2::identity() * PC_REGULARIZATION;
        eig = p.symmetric_eigen();
        regularized = true;
        if !(eig.eigenvalues.min() > 0.0) {
            return Err(CdmError::Geometry("projected covariance is not positive semidefinite".into()));
        }
    }
    if hard_body_radius == 0.0 {
        return Ok(CollisionProbability {
            probability: 0.0,
            regularized,
        });
    }
    let sx = eig.eigenvalues[0].sqrt();
    let sy = eig.eigenvalues[1].sqrt();
    let m = eig.eigenvectors.transpose() * miss;
    let (mx, my) = (m[0], m[1]);
    let r = hard_body_radius;

    let g = |phi: f64| {
        let x = r * phi.sin();
        let half = r * phi.cos();
        let zx = (x - mx) / sx;
        let density = (-0.5 * zx * zx).exp() / (sx * (2.0 * std::f64::consts::PI).sqrt());
        density * normal_interval((-half - my) / sy, (half - my) / sy) * r * phi.cos()
    };
    let panels = ((8.0 * r / sx.min(sy)).ceil() as usize).clamp(16, 4096);
    let pc = integrate(g, -FRAC_PI_2, FRAC_PI_2, panels, QUAD_TOL);
    Ok(CollisionProbability {
        probability: pc.clamp(0.0, 1.0),
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_interval_tails() {
        assert!((normal_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        let far = normal_interval(10.0, 11.0);
        // P(10 < Z < 11), 40-digit reference
        assert!(((far - 7.619_661_958_203_076e-24) / far).abs() < 1e-13, "{far:e}");
    }

    #[test]
    fn simpson_polynomial() {
        let v = integrate(|x| x * x * x - x, 0.0, 2.0, 4, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
