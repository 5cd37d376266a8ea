use nalgebra::{Matrix6, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{CdmError, SensorModel};
use crate::astro::{block_rotation, rtn_frame, state_to_elements_with_bstar, Epoch, OrbitalElements, StateVector};
use crate::propagation::{propagate_elements, PropagatorSpec};
use crate::rng::substream;

/// Redraws allowed per Monte Carlo sample before giving up (10·n in total).
pub const MC_RETRIES_PER_SAMPLE: usize = 10;

/// `truth` with independent Gaussian noise added along its own RTN axes.
pub fn observe_state<R: Rng + ?Sized>(
    truth: &StateVector,
    sensor: &SensorModel,
    rng: &mut R,
) -> Result<StateVector, CdmError> {
    let rot = rtn_frame(truth)?;
    let s = sensor.sigmas();
    let mut z = [0.0; 6];
    for (zi, si) in z.iter_mut().zip(s) {
        *zi = si * rng.sample::<f64, _>(StandardNormal);
    }
    let dp = rot.transpose() * Vector3::new(z[0], z[1], z[2]);
    let dv = rot.transpose() * Vector3::new(z[3], z[4], z[5]);
    Ok(StateVector::new(truth.position + dp, truth.velocity + dv, truth.epoch))
}

/// Sample mean and covariance of a propagated observation cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCovariance {
    pub mean_state: StateVector,
    /// In the RTN frame of `mean_state`, 1/(n−1) normalization.
    pub covariance_rtn: Matrix6<f64>,
    /// Draws discarded because the perturbed orbit was invalid or decayed.
    pub redraws: usize,
}

fn propagate_state(sv: &StateVector, bstar: f64, to: Epoch, spec: &PropagatorSpec) -> Result<StateVector, CdmError> {
    let el: OrbitalElements = state_to_elements_with_bstar(sv, bstar)?;
    let moved = propagate_elements(&el, to, spec)?;
    Ok(crate::astro::elements_to_state(&moved)?)
}

/// Perturbs `observed` `n_samples` times with the sensor noise, propagates every
/// draw to `tca`, and returns the cloud's mean and RTN covariance.
pub fn propagate_uncertainty_mc(
    observed: &StateVector,
    bstar: f64,
    sensor: &SensorModel,
    tca: Epoch,
    spec: &PropagatorSpec,
    n_samples: usize,
    seed: u64,
) -> Result<McCovariance, CdmError> {
    let (cloud, redraws) = propagate_cloud(observed, bstar, sensor, tca, spec, n_samples, seed)?;
    let mut out = cloud_covariance(&cloud, tca)?;
    out.redraws = redraws;
    Ok(out)
}

/// The propagated Monte Carlo cloud as inertial 6-vectors, plus the number of
/// redraws.
///
/// Sample `i` draws from sub-stream `i` of `seed`, so the result does not depend
/// on how the samples are scheduled. Draws that fail to propagate are redrawn
/// from the same sub-stream, at most [`MC_RETRIES_PER_SAMPLE`] times.
pub fn propagate_cloud(
    observed: &StateVector,
    bstar: f64,
    sensor: &SensorModel,
    tca: Epoch,
    spec: &PropagatorSpec,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<Vector6<f64>>, usize), CdmError> {
    if n_samples < 10 {
        return Err(CdmError::InvalidParams(format!("Monte Carlo needs at least 10 samples, got {n_samples}")));
    }
    sensor.validate()?;
    let draws: Vec<Result<(Vector6<f64>, usize), (usize, String)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let mut last = String::new();
            for attempt in 0..MC_RETRIES_PER_SAMPLE {
                let result = observe_state(observed, sensor, &mut rng)
                    .and_then(|p| propagate_state(&p, bstar, tca, spec));
                match result {
                    Ok(sv) => return Ok((Vector6::from_row_slice(&sv.to_array()), attempt)),
                    Err(e) => last = e.to_string(),
                }
            }
            Err((MC_RETRIES_PER_SAMPLE, last))
        })
        .collect();

    let mut xs = Vec::with_capacity(n_samples);
    let mut redraws = 0;
    for d in draws {
        match d {
            Ok((x, r)) => {
                xs.push(x);
                redraws += r;
            }
            Err((r, last)) => {
                return Err(CdmError::MonteCarloExhausted {
                    attempts: MC_RETRIES_PER_SAMPLE * n_samples,
                    failures: redraws + r,
                    last,
                })
            }
        }
    }
    Ok((xs, redraws))
}

/// Sample mean and covariance (1/(n−1)) of a cloud of inertial 6-vectors, the
/// covariance expressed in the RTN frame of the mean state.
pub fn cloud_covariance(cloud: &[Vector6<f64>], epoch: Epoch) -> Result<McCovariance, CdmError> {
    if cloud.len() < 2 {
        return Err(CdmError::InvalidParams("covariance needs at least two samples".into()));
    }
    let n = cloud.len() as f64;
    let mean = cloud.iter().fold(Vector6::zeros(), |acc, x| acc + x) / n;
    let mean_state = StateVector::new(
        Vector3::new(mean[0], mean[1], mean[2]),
        Vector3::new(mean[3], mean[4], mean[5]),
        epoch,
    );
    let rot = block_rotation(&rtn_frame(&mean_state)?);
    let mut cov = Matrix6::zeros();
    for x in cloud {
        let d = rot * (x - mean);
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    cov = 0.5 * (cov + cov.transpose());
    Ok(McCovariance {
        mean_state,
        covariance_rtn: cov,
        redraws: 0,
    })
}
