//! Reference implementations used only by tests: a fixed-step RK4 integrator of
//! the point-mass equation, a fine-grid brute-force closest-approach search, a
//! straight-line ephemeris stub and a Monte Carlo collision-probability estimate.

use conjsim::astro::{Epoch, StateVector};
use conjsim::constants::MU_EARTH;
use conjsim::propagation::{Ephemeris, PropagationError};
use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

fn accel(r: &Vector3<f64>) -> Vector3<f64> {
    let rn = r.norm();
    -MU_EARTH / (rn * rn * rn) * r
}

/// Integrates `r'' = −μ r / |r|³` from `sv` over `duration` seconds with classic
/// RK4 at `step` seconds, returning the state at the end.
pub fn rk4_two_body(sv: &StateVector, duration: f64, step: f64) -> StateVector {
    let n = (duration / step).round() as usize;
    let h = duration / n as f64;
    let (mut r, mut v) = (sv.position, sv.velocity);
    for _ in 0..n {
        let (k1r, k1v) = (v, accel(&r));
        let (k2r, k2v) = (v + 0.5 * h * k1v, accel(&(r + 0.5 * h * k1r)));
        let (k3r, k3v) = (v + 0.5 * h * k2v, accel(&(r + 0.5 * h * k2r)));
        let (k4r, k4v) = (v + h * k3v, accel(&(r + h * k3r)));
        r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    StateVector::new(r, v, sv.epoch + duration)
}

/// RK4 states at `sv.epoch + k·sample_every` for `k = 0..=count`, integrating
/// with `step` seconds in between.
pub fn rk4_trajectory(sv: &StateVector, sample_every: f64, count: usize, step: f64) -> Vec<StateVector> {
    let mut out = vec![*sv];
    let mut cur = *sv;
    for _ in 0..count {
        cur = rk4_two_body(&cur, sample_every, step);
        out.push(cur);
    }
    out
}

/// Straight-line motion `r0 + v (t − t0)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearEphemeris {
    pub r0: Vector3<f64>,
    pub v: Vector3<f64>,
    pub t0: Epoch,
}

impl Ephemeris for LinearEphemeris {
    fn state_at(&self, t: Epoch) -> Result<StateVector, PropagationError> {
        Ok(StateVector::new(self.r0 + self.v * (t - self.t0), self.v, t))
    }

    fn speed_bound(&self, _start: Epoch, _end: Epoch) -> f64 {
        self.v.norm()
    }
}

/// Closest-approach time of two straight lines, `−(Δr·Δv)/|Δv|²` from `t0`.
pub fn linear_tca(a: &LinearEphemeris, b: &LinearEphemeris) -> f64 {
    let t0 = a.t0.seconds();
    let dr = (b.r0 - b.v * (b.t0.seconds() - t0)) - a.r0;
    let dv = b.v - a.v;
    t0 - dr.dot(&dv) / dv.norm_squared()
}

/// A separation minimum found by [`brute_force_minima`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub tca: f64,
    pub miss: f64,
}

/// Separation minima below `threshold` on a uniform `fine_step` grid.
///
/// Every grid point is accounted for: a point is only skipped when the
/// separation at an earlier point, shrinking at the combined speed bound, cannot
/// reach `threshold + fine_step·v` before it. Each grid minimum is then polished
/// by a dense scan at `fine_step / 1000` over the two neighbouring intervals.
/// Minima closer than `merge_gap` seconds are merged into the deeper one.
pub fn brute_force_minima<A: Ephemeris + ?Sized, B: Ephemeris + ?Sized>(
    a: &A,
    b: &B,
    window: (f64, f64),
    fine_step: f64,
    threshold: f64,
    merge_gap: f64,
) -> Vec<GridMinimum> {
    let (start, end) = window;
    let dist = |t: f64| {
        let e = Epoch::from_seconds(t);
        (a.state_at(e).unwrap().position - b.state_at(e).unwrap().position).norm()
    };
    let n = ((end - start) / fine_step).floor() as usize;
    let v = a.speed_bound(Epoch::from_seconds(start), Epoch::from_seconds(end))
        + b.speed_bound(Epoch::from_seconds(start), Epoch::from_seconds(end));
    let near = threshold + v * fine_step;
    let mut d = vec![f64::INFINITY; n + 1];
    let mut k = 0usize;
    while k <= n {
        let dk = dist(start + k as f64 * fine_step);
        d[k] = dk;
        if dk > near {
            let skip = ((dk - near) / (v * fine_step)).floor() as usize;
            k += skip.max(1);
        } else {
            k += 1;
        }
    }
    let mut out: Vec<GridMinimum> = Vec::new();
    for i in 0..=n {
        let prev = if i > 0 { d[i - 1] } else { f64::INFINITY };
        let next = if i < n { d[i + 1] } else { f64::INFINITY };
        if !(d[i] <= near && d[i] < prev && d[i] <= next) {
            continue;
        }
        let t = start + i as f64 * fine_step;
        let fine = fine_step / 1000.0;
        let mut best = GridMinimum { tca: t, miss: d[i] };
        for j in -1000i64..=1000 {
            let tj = t + j as f64 * fine;
            if tj < start || tj > end {
                continue;
            }
            let dj = dist(tj);
            if dj < best.miss {
                best = GridMinimum { tca: tj, miss: dj };
            }
        }
        match out.last_mut() {
            Some(last) if best.tca - last.tca < merge_gap => {
                if best.miss < last.miss {
                    *last = best;
                }
            }
            _ => out.push(best),
        }
    }
    out.retain(|m| m.miss < threshold);
    out
}

/// Monte Carlo estimate of the probability that a 2D Gaussian with mean `miss`
/// and covariance `cov` falls in the disc of radius `radius` about the origin.
/// Returns `(estimate, standard error)`.
pub fn mc_disc_probability<R: Rng>(
    miss: Vector2<f64>,
    cov: Matrix2<f64>,
    radius: f64,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let l = cov.cholesky().expect("positive definite covariance").l();
    let mut hits = 0usize;
    for _ in 0..draws {
        let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        let x = miss + l * z;
        if x.norm_squared() <= radius * radius {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}
