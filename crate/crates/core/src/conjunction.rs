//! Close-approach screening of a target/chaser pair and TCA refinement.
//!
//! Screening samples the separation on a fixed grid, skipping ahead whenever the
//! current separation is too large to fall below the candidate radius before the
//! next grid point (bounded by the objects' maximum speeds). Local grid minima
//! below the candidate radius are refined by golden-section search.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::astro::{rtn_frame, AstroError, Epoch, OrbitalElements, StateVector};
use crate::propagation::{Ephemeris, Propagated, PropagationError, PropagatorSpec};

pub const DEFAULT_THRESHOLD_KM: f64 = 5.0;
pub const DEFAULT_STEP_S: f64 = 10.0;
/// Time tolerance of the golden-section refinement, seconds.
pub const REFINE_TOL_S: f64 = 1e-3;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRole {
    Target,
    Chaser,
}

impl fmt::Display for ObjectRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectRole::Target => "target",
            ObjectRole::Chaser => "chaser",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConjunctionError {
    #[error("{object}: {source}")]
    Propagation {
        object: ObjectRole,
        #[source]
        source: PropagationError,
    },
    #[error("invalid screening request: {0}")]
    InvalidArgument(String),
    #[error("refinement bracket [{lo}, {hi}] is not unimodal: {found} km at the returned point exceeds an endpoint")]
    NonUnimodal { lo: Epoch, hi: Epoch, found: f64 },
    #[error(transparent)]
    Astro(#[from] AstroError),
}

/// A refined local minimum of the separation between two ephemerides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    pub tca: Epoch,
    pub miss_distance: f64,
    pub target_state: StateVector,
    pub chaser_state: StateVector,
}

impl Encounter {
    pub fn relative_speed(&self) -> f64 {
        (self.chaser_state.velocity - self.target_state.velocity).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjunctionEvent {
    pub target_elements: OrbitalElements,
    pub chaser_elements: OrbitalElements,
    pub tca: Epoch,
    pub miss_distance: f64,
    pub relative_speed: f64,
    pub target_state_at_tca: StateVector,
    pub chaser_state_at_tca: StateVector,
    pub screening_threshold: f64,
}

impl ConjunctionEvent {
    fn from_encounter(
        target: &OrbitalElements,
        chaser: &OrbitalElements,
        enc: &Encounter,
        threshold: f64,
    ) -> Self {
        ConjunctionEvent {
            target_elements: *target,
            chaser_elements: *chaser,
            tca: enc.tca,
            miss_distance: enc.miss_distance,
            relative_speed: enc.relative_speed(),
            target_state_at_tca: enc.target_state,
            chaser_state_at_tca: enc.chaser_state,
            screening_threshold: threshold,
        }
    }

    /// Separation recomputed from the stored states.
    pub fn recomputed_miss_distance(&self) -> f64 {
        separation(&self.target_state_at_tca, &self.chaser_state_at_tca)
    }
}

fn separation(a: &StateVector, b: &StateVector) -> f64 {
    (b.position - a.position).norm()
}

struct Pair<'a, A: ?Sized, B: ?Sized> {
    target: &'a A,
    chaser: &'a B,
}

impl<A: Ephemeris + ?Sized, B: Ephemeris + ?Sized> Pair<'_, A, B> {
    fn states(&self, t: Epoch) -> Result<(StateVector, StateVector), ConjunctionError> {
        let a = self.target.state_at(t).map_err(|source| ConjunctionError::Propagation {
            object: ObjectRole::Target,
            source,
        })?;
        let b = self.chaser.state_at(t).map_err(|source| ConjunctionError::Propagation {
            object: ObjectRole::Chaser,
            source,
        })?;
        Ok((a, b))
    }

    fn distance(&self, t: Epoch) -> Result<f64, ConjunctionError> {
        let (a, b) = self.states(t)?;
        Ok(separation(&a, &b))
    }

    fn encounter(&self, t: Epoch) -> Result<Encounter, ConjunctionError> {
        let (a, b) = self.states(t)?;
        Ok(Encounter {
            tca: t,
            miss_distance: separation(&a, &b),
            target_state: a,
            chaser_state: b,
        })
    }
}

/// Golden-section search for the minimum separation on `[lo, hi]`, followed by
/// one parabolic step through points spaced `REFINE_TOL_S` around the result.
fn golden_section<A, B>(pair: &Pair<'_, A, B>, lo: Epoch, hi: Epoch) -> Result<Encounter, ConjunctionError>
where
    A: Ephemeris + ?Sized,
    B: Ephemeris + ?Sized,
{
    let (mut a, mut b) = (lo.seconds(), hi.seconds());
    if b - a <= REFINE_TOL_S {
        let mid = if b > a { 0.5 * (a + b) } else { a };
        return pair.encounter(Epoch::from_seconds(mid));
    }
    let f = |t: f64| -> Result<f64, ConjunctionError> { pair.distance(Epoch::from_seconds(t)).map(|d| d * d) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > REFINE_TOL_S {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let (mut t, ft) = if fc <= fd { (c, fc) } else { (d, fd) };

    // Squared separation is locally quadratic; one parabolic step removes most of
    // the residual error left by the golden-section tolerance.
    let h = REFINE_TOL_S;
    let (lo_s, hi_s) = (lo.seconds(), hi.seconds());
    if t - h >= lo_s && t + h <= hi_s {
        let (fm, fp) = (f(t - h)?, f(t + h)?);
        let curv = fp - 2.0 * ft + fm;
        if curv > 0.0 {
            let step = -0.5 * h * (fp - fm) / curv;
            let tp = (t + step).clamp(lo_s, hi_s);
            if f(tp)? <= ft {
                t = tp;
            }
        }
    }
    pair.encounter(Epoch::from_seconds(t))
}

/// Time of closest approach on `bracket` for two ephemerides.
///
/// The squared separation must be unimodal on the bracket; a result worse than
/// both endpoints is reported as [`ConjunctionError::NonUnimodal`].
pub fn refine_tca_ephemeris<A, B>(target: &A, chaser: &B, bracket: (Epoch, Epoch)) -> Result<Encounter, ConjunctionError>
where
    A: Ephemeris + ?Sized,
    B: Ephemeris + ?Sized,
{
    let (lo, hi) = bracket;
    if !(hi >= lo) {
        return Err(ConjunctionError::InvalidArgument(format!("bracket end {hi} precedes start {lo}")));
    }
    let pair = Pair { target, chaser };
    if hi == lo {
        return pair.encounter(lo);
    }
    let best = golden_section(&pair, lo, hi)?;
    let ends = pair.distance(lo)?.min(pair.distance(hi)?);
    if best.miss_distance > ends {
        return Err(ConjunctionError::NonUnimodal {
            lo,
            hi,
            found: best.miss_distance,
        });
    }
    Ok(best)
}

/// [`refine_tca_ephemeris`] for two element sets under `spec`. Returns `(tca, miss)`.
pub fn refine_tca(
    target: &OrbitalElements,
    chaser: &OrbitalElements,
    bracket: (Epoch, Epoch),
    spec: &PropagatorSpec,
) -> Result<(Epoch, f64), ConjunctionError> {
    let (a, b) = propagated_pair(target, chaser, spec)?;
    let enc = refine_tca_ephemeris(&a, &b, bracket)?;
    Ok((enc.tca, enc.miss_distance))
}

fn propagated_pair(
    target: &OrbitalElements,
    chaser: &OrbitalElements,
    spec: &PropagatorSpec,
) -> Result<(Propagated, Propagated), ConjunctionError> {
    let a = Propagated::new(*target, *spec).map_err(|source| ConjunctionError::Propagation {
        object: ObjectRole::Target,
        source,
    })?;
    let b = Propagated::new(*chaser, *spec).map_err(|source| ConjunctionError::Propagation {
        object: ObjectRole::Chaser,
        source,
    })?;
    Ok((a, b))
}

/// Grid times `start + k·step`, plus `end` when it is off the grid.
fn grid_times(start: Epoch, end: Epoch, step: f64) -> Vec<Epoch> {
    let n = ((end - start) / step).floor() as usize;
    let mut times: Vec<Epoch> = (0..=n).map(|k| start + k as f64 * step).collect();
    if end - *times.last().unwrap() > 1e-9 {
        times.push(end);
    }
    times
}

/// All refined separation minima below `threshold` on `[start, end]`, sorted by TCA.
///
/// Minima whose TCAs are closer than `2·step` are merged into the deeper one
/// (the earlier one on ties). An infinite threshold returns every local minimum.
pub fn screen_ephemerides<A, B>(
    target: &A,
    chaser: &B,
    window: (Epoch, Epoch),
    threshold: f64,
    step: f64,
) -> Result<Vec<Encounter>, ConjunctionError>
where
    A: Ephemeris + ?Sized,
    B: Ephemeris + ?Sized,
{
    let (start, end) = window;
    if !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(ConjunctionError::InvalidArgument(format!("empty window [{start}, {end}]")));
    }
    if !(threshold > 0.0) {
        return Err(ConjunctionError::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(ConjunctionError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let pair = Pair { target, chaser };
    // decay is monotone, so checking both ends surfaces it even when the pair is prefiltered
    pair.states(start)?;
    pair.states(end)?;
    if let (Some((a_lo, a_hi)), Some((b_lo, b_hi))) = (target.radius_bounds(start, end), chaser.radius_bounds(start, end)) {
        if a_lo - b_hi >= threshold || b_lo - a_hi >= threshold {
            return Ok(Vec::new());
        }
    }
    let v_rel = target.speed_bound(start, end) + chaser.speed_bound(start, end);
    let candidate = threshold + v_rel * step + 1.0;
    let times = grid_times(start, end, step);

    // Distances at evaluated grid points; skipped points are known to exceed `candidate`.
    let mut dist: Vec<Option<f64>> = vec![None; times.len()];
    let mut k = 0;
    while k < times.len() {
        let d = pair.distance(times[k])?;
        dist[k] = Some(d);
        if d > candidate && v_rel > 0.0 {
            let jump = ((d - candidate) / (v_rel * step)).floor();
            k += if jump >= 1.0 { jump.min(times.len() as f64) as usize } else { 1 };
        } else {
            k += 1;
        }
    }

    let value = |i: Option<usize>| i.and_then(|i| dist.get(i).copied().flatten()).unwrap_or(f64::INFINITY);
    let mut found: Vec<Encounter> = Vec::new();
    for (i, d) in dist.iter().enumerate() {
        let Some(d) = *d else { continue };
        if d > candidate {
            continue;
        }
        let prev = value(i.checked_sub(1));
        let next = value(Some(i + 1));
        // first point of a plateau counts once
        if !(d < prev && d <= next) {
            continue;
        }
        let lo = times[i.saturating_sub(1)];
        let hi = times[(i + 1).min(times.len() - 1)];
        let grid = pair.encounter(times[i])?;
        let refined = golden_section(&pair, lo, hi)?;
        let best = if refined.miss_distance < grid.miss_distance { refined } else { grid };
        merge_into(&mut found, best, 2.0 * step);
    }
    found.retain(|e| e.miss_distance < threshold);
    Ok(found)
}

fn merge_into(found: &mut Vec<Encounter>, e: Encounter, gap: f64) {
    if let Some(last) = found.last_mut() {
        if e.tca - last.tca < gap {
            if e.miss_distance < last.miss_distance {
                *last = e;
            }
            return;
        }
    }
    found.push(e);
}

/// Conjunctions between two objects over `window`, one per merged separation
/// minimum below `threshold`, sorted by TCA.
pub fn screen_pair(
    target: &OrbitalElements,
    chaser: &OrbitalElements,
    window: (Epoch, Epoch),
    spec: &PropagatorSpec,
    threshold: f64,
    step: f64,
) -> Result<Vec<ConjunctionEvent>, ConjunctionError> {
    let (a, b) = propagated_pair(target, chaser, spec)?;
    Ok(screen_ephemerides(&a, &b, window, threshold, step)?
        .iter()
        .map(|e| ConjunctionEvent::from_encounter(target, chaser, e, threshold))
        .collect())
}

/// The event with the smallest miss distance (earliest on ties).
pub fn deepest(events: &[ConjunctionEvent]) -> Option<&ConjunctionEvent> {
    events.iter().fold(None, |best: Option<&ConjunctionEvent>, e| match best {
        Some(b) if b.miss_distance <= e.miss_distance => Some(b),
        _ => Some(e),
    })
}

/// Relative position and velocity of the chaser, in the target's RTN frame.
pub fn relative_geometry(e: &ConjunctionEvent) -> Result<(Vector3<f64>, Vector3<f64>), ConjunctionError> {
    relative_geometry_of(&e.target_state_at_tca, &e.chaser_state_at_tca)
}

pub fn relative_geometry_of(
    target: &StateVector,
    chaser: &StateVector,
) -> Result<(Vector3<f64>, Vector3<f64>), ConjunctionError> {
    let rot = rtn_frame(target)?;
    Ok((
        rot * (chaser.position - target.position),
        rot * (chaser.velocity - target.velocity),
    ))
}

/// Chaser elements (at the target's epoch) whose trajectory passes
/// `offset_rtn` km from the target at `tca`, in the target's RTN frame at that
/// time. The chaser's velocity is the target's rotated by `crossing_angle`
/// radians about the radial axis, so both objects have the same speed there.
pub fn construct_crossing(
    target: &OrbitalElements,
    spec: &PropagatorSpec,
    tca: Epoch,
    crossing_angle: f64,
    offset_rtn: Vector3<f64>,
) -> Result<OrbitalElements, ConjunctionError> {
    let role = |object| move |source| ConjunctionError::Propagation { object, source };
    let sv = crate::propagation::propagate(target, tca, spec).map_err(role(ObjectRole::Target))?;
    let rot = rtn_frame(&sv)?;
    let r_hat = sv.position.normalize();
    let spin = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(r_hat), crossing_angle);
    let chaser_sv = StateVector::new(sv.position + rot.transpose() * offset_rtn, spin * sv.velocity, tca);
    let at_tca = crate::astro::state_to_elements_with_bstar(&chaser_sv, target.bstar)?;
    crate::propagation::propagate_elements(&at_tca, target.epoch, spec).map_err(role(ObjectRole::Chaser))
}
