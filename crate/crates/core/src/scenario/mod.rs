//! The end-to-end generative program: two objects from the prior, a week of
//! screening, and a CDM series for every conjunction. Also the likelihood used
//! to condition on an observed series and the sensor-noise calibration.

mod calibrate;
mod diagnostics;
mod dump;
mod model;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::astro::Epoch;
use crate::cdm::{CdmError, IssueParams, SensorModel, DEFAULT_HARD_BODY_RADIUS_KM};
use crate::conjunction::{ConjunctionError, ObjectRole, DEFAULT_STEP_S, DEFAULT_THRESHOLD_KM};
use crate::constants::SECONDS_PER_DAY;
use crate::population::{PopulationError, PopulationPrior};
use crate::ppl::PplError;
use crate::propagation::PropagatorSpec;

pub use calibrate::{
    calibrate_sensors, simulate_covariances, CalibrationReport, CalibrationSettings, Calibration, EntryQuantiles,
    QUANTILE_LEVELS,
};
pub use diagnostics::{posterior_diagnostics, PosteriorDiagnostics, SiteSummary, TV_BINS};
pub use dump::{parse_posterior_dump, write_posterior_dump, DumpHeader, PosteriorDump, DUMP_FORMAT, DUMP_VERSION};
pub use model::{
    generate_event, infer_event, likelihood, observation_names, rejection_sample_conjunction, simulate_truth,
    site_names, ConditionOn, EventObservation, EventOutcome, GeneratedEvent, GenerationFailure, ObjectObservables,
    SampledConjunction, Truth,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Conjunction(#[from] ConjunctionError),
    #[error("CDM: {0}")]
    Cdm(String),
    #[error(transparent)]
    Ppl(PplError),
    #[error(
        "all {n} proposals have zero weight ({reasons:?}); increase the number of samples or widen the likelihood sigmas"
    )]
    DegeneratePosterior { n: usize, reasons: BTreeMap<String, usize> },
    #[error("no conjunction after {attempts} attempts ({reasons:?})")]
    CapExhausted { attempts: usize, reasons: BTreeMap<String, usize> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<CdmError> for ScenarioError {
    fn from(e: CdmError) -> Self {
        ScenarioError::Cdm(e.to_string())
    }
}

impl From<PplError> for ScenarioError {
    fn from(e: PplError) -> Self {
        match e {
            PplError::DegeneratePosterior { n, reasons } => ScenarioError::DegeneratePosterior { n, reasons },
            other => ScenarioError::Ppl(other),
        }
    }
}

/// Standard deviations of the Gaussian likelihood on each observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodSigmas {
    pub tca_s: f64,
    pub semi_major_axis_km: f64,
    pub eccentricity: f64,
    pub inclination_rad: f64,
}

impl Default for LikelihoodSigmas {
    fn default() -> Self {
        LikelihoodSigmas {
            tca_s: 60.0,
            semi_major_axis_km: 5.0,
            eccentricity: 1e-3,
            inclination_rad: 0.5f64.to_radians(),
        }
    }
}

impl LikelihoodSigmas {
    pub fn scaled(&self, k: f64) -> Self {
        LikelihoodSigmas {
            tca_s: self.tca_s * k,
            semi_major_axis_km: self.semi_major_axis_km * k,
            eccentricity: self.eccentricity * k,
            inclination_rad: self.inclination_rad * k,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("tca_s", self.tca_s),
            ("semi_major_axis_km", self.semi_major_axis_km),
            ("eccentricity", self.eccentricity),
            ("inclination_rad", self.inclination_rad),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Config(format!("likelihood sigma {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything that defines the generative model.
///
/// `target_prior` and `chaser_prior` replace `prior` for that object when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub window_days: f64,
    pub threshold_km: f64,
    pub screening_step_s: f64,
    pub cadence_s: f64,
    pub jitter_s: f64,
    pub lead_s: f64,
    pub n_mc_covariance: usize,
    pub hard_body_radius_km: Option<f64>,
    pub rescreen_half_width_s: f64,
    pub propagator: PropagatorSpec,
    pub target_sensor: SensorModel,
    pub chaser_sensor: SensorModel,
    pub likelihood_sigmas: LikelihoodSigmas,
    pub prior: PopulationPrior,
    pub target_prior: Option<PopulationPrior>,
    pub chaser_prior: Option<PopulationPrior>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let issue = IssueParams::default();
        ScenarioConfig {
            window_days: 7.0,
            threshold_km: DEFAULT_THRESHOLD_KM,
            screening_step_s: DEFAULT_STEP_S,
            cadence_s: issue.cadence_s,
            jitter_s: issue.jitter_s,
            lead_s: issue.lead_s,
            n_mc_covariance: issue.n_mc,
            hard_body_radius_km: Some(DEFAULT_HARD_BODY_RADIUS_KM),
            rescreen_half_width_s: issue.rescreen_half_width_s,
            propagator: PropagatorSpec::default(),
            target_sensor: SensorModel::default_target(),
            chaser_sensor: SensorModel::default_chaser(),
            likelihood_sigmas: LikelihoodSigmas::default(),
            prior: PopulationPrior::default_leo(),
            target_prior: None,
            chaser_prior: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("window_days", self.window_days)?;
        positive("threshold_km", self.threshold_km)?;
        positive("screening_step_s", self.screening_step_s)?;
        if self.lead_s > self.window_days * SECONDS_PER_DAY {
            return Err(ScenarioError::Config(format!(
                "lead ({} s) exceeds the window ({} days)",
                self.lead_s, self.window_days
            )));
        }
        self.issue_params().validate()?;
        self.target_sensor.validate()?;
        self.chaser_sensor.validate()?;
        self.likelihood_sigmas.validate()?;
        for role in [ObjectRole::Target, ObjectRole::Chaser] {
            self.prior_for(role)
                .validate()
                .map_err(|e| ScenarioError::Config(format!("{role} prior: {e}")))?;
        }
        Ok(())
    }

    pub fn prior_for(&self, role: ObjectRole) -> &PopulationPrior {
        let specific = match role {
            ObjectRole::Target => &self.target_prior,
            ObjectRole::Chaser => &self.chaser_prior,
        };
        specific.as_ref().unwrap_or(&self.prior)
    }

    pub fn sensor_for(&self, role: ObjectRole) -> &SensorModel {
        match role {
            ObjectRole::Target => &self.target_sensor,
            ObjectRole::Chaser => &self.chaser_sensor,
        }
    }

    pub fn window(&self) -> (Epoch, Epoch) {
        (Epoch::ZERO, Epoch::from_days(self.window_days))
    }

    pub fn issue_params(&self) -> IssueParams {
        IssueParams {
            cadence_s: self.cadence_s,
            lead_s: self.lead_s,
            jitter_s: self.jitter_s,
            n_mc: self.n_mc_covariance,
            hard_body_radius_km: self.hard_body_radius_km,
            rescreen_half_width_s: self.rescreen_half_width_s,
            rescreen_step_s: self.screening_step_s,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let c: ScenarioConfig = toml::from_str(s).map_err(|e| ScenarioError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}
