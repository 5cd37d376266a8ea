//! Observation model, Monte Carlo covariance propagation, CDM issuing,
//! encounter-plane collision probability and CDM serialization.

mod io;
mod issue;
mod observe;
mod pc;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::astro::{AstroError, Epoch, StateVector};
use crate::conjunction::{ConjunctionError, ConjunctionEvent};
use crate::propagation::PropagationError;

pub use io::{
    covariance_column_names, parse_cdm_csv, parse_cdm_jsonl, read_reference_covariances, record_columns,
    write_cdm_csv, write_cdm_jsonl, ReferenceCovariances, CDM_CSV_FORMAT, CDM_FORMAT, CDM_FORMAT_VERSION,
};
pub use issue::{issue_cdm_estimates, issue_cdm_series, issuing_epochs, CdmEstimate, IssueParams};
pub use observe::{
    cloud_covariance, observe_state, propagate_cloud, propagate_uncertainty_mc, McCovariance, MC_RETRIES_PER_SAMPLE,
};
pub use pc::{collision_probability_2d, CollisionProbability, PC_METHOD, PC_REGULARIZATION};

pub const DEFAULT_HARD_BODY_RADIUS_KM: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum CdmError {
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
    #[error("invalid CDM issuing parameters: {0}")]
    InvalidParams(String),
    #[error("propagation: {0}")]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Astro(#[from] AstroError),
    #[error(transparent)]
    Conjunction(#[from] ConjunctionError),
    #[error("Monte Carlo covariance: {failures} of {attempts} draws failed; last: {last}")]
    MonteCarloExhausted { attempts: usize, failures: usize, last: String },
    #[error("collision probability undefined: {0}")]
    Geometry(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format {found:?} (expected {expected})")]
    Version { found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 1σ observation noise of one object, per RTN axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    /// km
    pub position_sigma_rtn: [f64; 3],
    /// km/s
    pub velocity_sigma_rtn: [f64; 3],
    /// Probability that an issuing epoch brings a fresh observation of the object.
    pub update_probability: f64,
}

impl SensorModel {
    /// GPS-grade tracking of an operational satellite.
    pub fn default_target() -> Self {
        SensorModel {
            position_sigma_rtn: [0.01, 0.04, 0.01],
            velocity_sigma_rtn: [1e-5, 4e-5, 1e-5],
            update_probability: 1.0,
        }
    }

    /// Intermittent radar tracking of debris.
    pub fn default_chaser() -> Self {
        SensorModel {
            position_sigma_rtn: [0.1, 1.0, 0.3],
            velocity_sigma_rtn: [1e-4, 1e-3, 3e-4],
            update_probability: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), CdmError> {
        for s in self.position_sigma_rtn.iter().chain(&self.velocity_sigma_rtn) {
            if !(s.is_finite() && *s > 0.0) {
                return Err(CdmError::InvalidSensor(format!("sigmas must be positive, got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.update_probability) {
            return Err(CdmError::InvalidSensor(format!(
                "update probability {} outside [0, 1]",
                self.update_probability
            )));
        }
        Ok(())
    }

    /// All sigmas multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        SensorModel {
            position_sigma_rtn: self.position_sigma_rtn.map(|s| s * k),
            velocity_sigma_rtn: self.velocity_sigma_rtn.map(|s| s * k),
            update_probability: self.update_probability,
        }
    }

    pub fn sigmas(&self) -> [f64; 6] {
        let (p, v) = (self.position_sigma_rtn, self.velocity_sigma_rtn);
        [p[0], p[1], p[2], v[0], v[1], v[2]]
    }
}

/// Per-object content of a CDM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub state_at_tca: StateVector,
    /// Position/velocity covariance in the object's RTN frame (km, km/s).
    pub covariance_rtn: Matrix6<f64>,
    /// Time since the observation the report is based on, seconds.
    pub observation_age: f64,
}

impl ObjectReport {
    pub fn freshly_observed(&self) -> bool {
        self.observation_age == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmRecord {
    pub creation_epoch: Epoch,
    pub tca_estimate: Epoch,
    pub miss_distance_estimate: f64,
    pub relative_speed_estimate: f64,
    pub target: ObjectReport,
    pub chaser: ObjectReport,
    pub collision_probability: Option<f64>,
    pub collision_probability_method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmSeries {
    pub event_id: String,
    /// Present for synthetic events, absent for ingested messages.
    pub ground_truth: Option<ConjunctionEvent>,
    pub records: Vec<CdmRecord>,
}

impl CdmSeries {
    /// Records strictly increasing in creation epoch and, with ground truth,
    /// all created before the true TCA.
    pub fn check_ordering(&self) -> Result<(), String> {
        for w in self.records.windows(2) {
            if !(w[1].creation_epoch > w[0].creation_epoch) {
                return Err(format!(
                    "creation epochs {} and {} are not increasing",
                    w[0].creation_epoch, w[1].creation_epoch
                ));
            }
        }
        if let Some(truth) = &self.ground_truth {
            if let Some(r) = self.records.iter().find(|r| r.creation_epoch >= truth.tca) {
                return Err(format!("record created at {} is not before TCA {}", r.creation_epoch, truth.tca));
            }
        }
        Ok(())
    }
}

/// Symmetrizes `c` in place and returns its smallest eigenvalue.
pub fn symmetrize(c: &mut Matrix6<f64>) -> f64 {
    *c = 0.5 * (*c + c.transpose());
    c.symmetric_eigenvalues().min()
}
