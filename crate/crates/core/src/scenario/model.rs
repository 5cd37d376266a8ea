use std::collections::BTreeMap;
use std::fmt;

use super::{LikelihoodSigmas, ScenarioConfig, ScenarioError};
use crate::astro::{angle_difference, state_to_elements, Epoch, OrbitalElements, StateVector};
use crate::cdm::{issue_cdm_estimates, issue_cdm_series, CdmError, CdmRecord, CdmSeries};
use crate::conjunction::{deepest, screen_pair, ConjunctionError, ConjunctionEvent, ObjectRole};
use crate::population::PopulationPrior;
use crate::ppl::{
    importance_sample, normal_log_pdf, run_model, Distribution, Mode, Observations, PplError, Trace, TraceContext,
    WeightedPosterior,
};
use crate::propagation::PropagationError;
use crate::rng::{derive_seed, substream};

const ROLES: [ObjectRole; 2] = [ObjectRole::Target, ObjectRole::Chaser];

/// Names of the latent sites sampled for each object, in execution order.
pub fn site_names(config: &ScenarioConfig) -> Vec<String> {
    ROLES
        .iter()
        .flat_map(|role| {
            config
                .prior_for(*role)
                .marginals()
                .into_iter()
                .map(move |(name, _)| format!("{role}/{name}"))
        })
        .collect()
}

/// Why a draw from the prior produced no usable pair.
#[derive(Debug, Clone, PartialEq)]
pub enum GenerationFailure {
    InvalidElements { object: ObjectRole, reason: String },
    Decay { message: String },
    /// The conjunction happens at the very start of the window, before any
    /// message could be issued.
    NoMessages,
}

impl GenerationFailure {
    /// Short label used to tally rejections.
    pub fn label(&self) -> &'static str {
        match self {
            GenerationFailure::InvalidElements { .. } => "invalid elements",
            GenerationFailure::Decay { .. } => "decay",
            GenerationFailure::NoMessages => "no messages",
        }
    }
}

impl fmt::Display for GenerationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerationFailure::InvalidElements { object, reason } => write!(f, "{object}: invalid elements: {reason}"),
            GenerationFailure::Decay { message } => write!(f, "decay: {message}"),
            GenerationFailure::NoMessages => f.write_str("conjunction at window start, no messages"),
        }
    }
}

/// Ground truth of one execution before any message is issued.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Conjunction(ConjunctionEvent),
    NoConjunction,
    Failed(GenerationFailure),
}

fn sample_object_sites(
    ctx: &mut TraceContext<'_>,
    role: ObjectRole,
    prior: &PopulationPrior,
) -> Result<OrbitalElements, String> {
    let mut values = [0.0; 7];
    for (v, (name, dist)) in values.iter_mut().zip(prior.marginals()) {
        *v = ctx.sample(&format!("{role}/{name}"), dist);
    }
    prior.elements_from_values(values, Epoch::ZERO)
}

fn is_decay(e: &ConjunctionError) -> bool {
    matches!(
        e,
        ConjunctionError::Propagation {
            source: PropagationError::Decay { .. },
            ..
        }
    )
}

/// Samples both objects at their latent sites and screens the pair.
///
/// Both objects are always sampled, so every execution visits the same sites
/// once each.
pub fn simulate_truth(ctx: &mut TraceContext<'_>, config: &ScenarioConfig) -> Result<Truth, ScenarioError> {
    let target = sample_object_sites(ctx, ObjectRole::Target, config.prior_for(ObjectRole::Target));
    let chaser = sample_object_sites(ctx, ObjectRole::Chaser, config.prior_for(ObjectRole::Chaser));
    let (target, chaser) = match (target, chaser) {
        (Ok(t), Ok(c)) => (t, c),
        (Err(reason), _) => {
            return Ok(Truth::Failed(GenerationFailure::InvalidElements {
                object: ObjectRole::Target,
                reason,
            }))
        }
        (_, Err(reason)) => {
            return Ok(Truth::Failed(GenerationFailure::InvalidElements {
                object: ObjectRole::Chaser,
                reason,
            }))
        }
    };
    let events = match screen_pair(
        &target,
        &chaser,
        config.window(),
        &config.propagator,
        config.threshold_km,
        config.screening_step_s,
    ) {
        Ok(events) => events,
        Err(e) if is_decay(&e) => return Ok(Truth::Failed(GenerationFailure::Decay { message: e.to_string() })),
        Err(e) => return Err(e.into()),
    };
    Ok(match deepest(&events) {
        Some(e) if e.tca > config.window().0 => Truth::Conjunction(*e),
        Some(_) => Truth::Failed(GenerationFailure::NoMessages),
        None => Truth::NoConjunction,
    })
}

fn cdm_failure(e: CdmError) -> Result<GenerationFailure, ScenarioError> {
    match e {
        CdmError::Propagation(p @ PropagationError::Decay { .. }) => Ok(GenerationFailure::Decay {
            message: format!("observed trajectory: {p}"),
        }),
        CdmError::Conjunction(c) if is_decay(&c) => Ok(GenerationFailure::Decay {
            message: format!("observed trajectory: {c}"),
        }),
        other => Err(other.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventOutcome {
    Conjunction { event: ConjunctionEvent, series: CdmSeries },
    NoConjunction,
    Failed(GenerationFailure),
}

/// One forward execution of the model with its trace.
#[derive(Debug, Clone)]
pub struct GeneratedEvent {
    pub outcome: EventOutcome,
    pub trace: Trace,
}

/// Runs the generative program once. Latent sites draw from stream 0 of
/// `seed`; observation noise and message timing draw from stream 1.
pub fn generate_event(config: &ScenarioConfig, seed: u64, event_id: &str) -> Result<GeneratedEvent, ScenarioError> {
    config.validate()?;
    let mut result: Result<EventOutcome, ScenarioError> = Ok(EventOutcome::NoConjunction);
    let ((), trace) = run_model(
        |ctx| {
            result = (|| {
                let event = match simulate_truth(ctx, config)? {
                    Truth::Conjunction(e) => e,
                    Truth::NoConjunction => return Ok(EventOutcome::NoConjunction),
                    Truth::Failed(f) => return Ok(EventOutcome::Failed(f)),
                };
                match issue_cdm_series(
                    &event,
                    event_id,
                    &config.target_sensor,
                    &config.chaser_sensor,
                    &config.issue_params(),
                    &config.propagator,
                    config.window(),
                    ctx.aux_rng(),
                ) {
                    Ok(series) => Ok(EventOutcome::Conjunction { event, series }),
                    Err(e) => Ok(EventOutcome::Failed(cdm_failure(e)?)),
                }
            })();
            Ok(())
        },
        Mode::Prior,
        substream(seed, 0),
        substream(seed, 1),
    )?;
    Ok(GeneratedEvent { outcome: result?, trace })
}

/// A conjunction found by [`rejection_sample_conjunction`].
#[derive(Debug, Clone)]
pub struct SampledConjunction {
    pub event: ConjunctionEvent,
    pub series: CdmSeries,
    pub trace: Trace,
    pub attempts: usize,
    /// Seed of the accepted attempt, for [`generate_event`].
    pub attempt_seed: u64,
    /// Outcomes of the rejected attempts.
    pub rejections: BTreeMap<String, usize>,
}

/// Calls [`generate_event`] with seeds `derive_seed(seed, [j])`, `j = 0, 1, ...`,
/// until a conjunction is produced or `max_attempts` is reached.
pub fn rejection_sample_conjunction(
    config: &ScenarioConfig,
    seed: u64,
    event_id: &str,
    max_attempts: usize,
) -> Result<SampledConjunction, ScenarioError> {
    if max_attempts == 0 {
        return Err(ScenarioError::InvalidArgument("max_attempts must be at least 1".into()));
    }
    let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
    for j in 0..max_attempts {
        let attempt_seed = derive_seed(seed, &[j as u64]);
        let g = generate_event(config, attempt_seed, event_id)?;
        let label = match g.outcome {
            EventOutcome::Conjunction { event, series } => {
                return Ok(SampledConjunction {
                    event,
                    series,
                    trace: g.trace,
                    attempts: j + 1,
                    attempt_seed,
                    rejections,
                })
            }
            EventOutcome::NoConjunction => "no conjunction",
            EventOutcome::Failed(f) => f.label(),
        };
        *rejections.entry(label.to_string()).or_default() += 1;
    }
    Err(ScenarioError::CapExhausted {
        attempts: max_attempts,
        reasons: rejections,
    })
}

/// Keplerian observables of one object at the estimated TCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectObservables {
    pub eccentricity: f64,
    /// rad
    pub inclination: f64,
    /// km
    pub semi_major_axis: f64,
}

impl ObjectObservables {
    fn from_state(sv: &StateVector) -> Result<Self, ScenarioError> {
        let el = state_to_elements(sv).map_err(|e| ScenarioError::Cdm(format!("state at TCA: {e}")))?;
        Ok(ObjectObservables {
            eccentricity: el.eccentricity,
            inclination: el.inclination,
            semi_major_axis: el.semi_major_axis,
        })
    }
}

/// The values a message contributes to the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventObservation {
    pub tca: Epoch,
    pub target: ObjectObservables,
    pub chaser: ObjectObservables,
}

impl EventObservation {
    pub fn from_record(r: &CdmRecord) -> Result<Self, ScenarioError> {
        Self::from_states(r.tca_estimate, &r.target.state_at_tca, &r.chaser.state_at_tca)
    }

    pub fn from_states(tca: Epoch, target: &StateVector, chaser: &StateVector) -> Result<Self, ScenarioError> {
        Ok(EventObservation {
            tca,
            target: ObjectObservables::from_state(target)?,
            chaser: ObjectObservables::from_state(chaser)?,
        })
    }

    /// `(name, value)` of the seven observables.
    pub fn values(&self) -> [(&'static str, f64); 7] {
        [
            ("tca", self.tca.seconds()),
            ("target/eccentricity", self.target.eccentricity),
            ("target/inclination", self.target.inclination),
            ("target/semi_major_axis", self.target.semi_major_axis),
            ("chaser/eccentricity", self.chaser.eccentricity),
            ("chaser/inclination", self.chaser.inclination),
            ("chaser/semi_major_axis", self.chaser.semi_major_axis),
        ]
    }
}

fn observable_distribution(name: &str, mean: f64, sigmas: &LikelihoodSigmas) -> Distribution {
    match name.rsplit('/').next().unwrap_or(name) {
        "tca" => Distribution::normal(mean, sigmas.tca_s),
        "eccentricity" => Distribution::normal(mean, sigmas.eccentricity),
        "semi_major_axis" => Distribution::normal(mean, sigmas.semi_major_axis_km),
        "inclination" => Distribution::WrappedNormal {
            mean,
            sd: sigmas.inclination_rad,
        },
        other => unreachable!("unknown observable {other}"),
    }
}

/// Sum of the seven Gaussian log-densities of `observed` centred on
/// `simulated`. Inclinations are compared by circular distance.
pub fn likelihood(observed: &EventObservation, simulated: &EventObservation, sigmas: &LikelihoodSigmas) -> f64 {
    let term = |o: f64, s: f64, sd: f64| normal_log_pdf(o, s, sd);
    let obj = |o: &ObjectObservables, s: &ObjectObservables| {
        term(o.eccentricity, s.eccentricity, sigmas.eccentricity)
            + term(angle_difference(o.inclination, s.inclination), 0.0, sigmas.inclination_rad)
            + term(o.semi_major_axis, s.semi_major_axis, sigmas.semi_major_axis_km)
    };
    term(observed.tca.seconds(), simulated.tca.seconds(), sigmas.tca_s)
        + obj(&observed.target, &simulated.target)
        + obj(&observed.chaser, &simulated.chaser)
}

/// Which messages of the observed series to condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionOn {
    First,
    Index(usize),
    All,
}

impl ConditionOn {
    pub fn indices(self, len: usize) -> Vec<usize> {
        match self {
            ConditionOn::First => vec![0],
            ConditionOn::Index(k) => vec![k],
            ConditionOn::All => (0..len).collect(),
        }
    }
}

impl fmt::Display for ConditionOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionOn::First => f.write_str("first"),
            ConditionOn::Index(k) => write!(f, "index {k}"),
            ConditionOn::All => f.write_str("all"),
        }
    }
}

/// Observation names emitted for message `k`.
pub fn observation_names(k: usize) -> [String; 7] {
    EventObservation {
        tca: Epoch::ZERO,
        target: ObjectObservables {
            eccentricity: 0.0,
            inclination: 0.0,
            semi_major_axis: 0.0,
        },
        chaser: ObjectObservables {
            eccentricity: 0.0,
            inclination: 0.0,
            semi_major_axis: 0.0,
        },
    }
    .values()
    .map(|(name, _)| format!("cdm{k}/{name}"))
}

fn conditioned_model(
    ctx: &mut TraceContext<'_>,
    config: &ScenarioConfig,
    indices: &[usize],
) -> Result<(), ScenarioError> {
    let event = match simulate_truth(ctx, config)? {
        Truth::Conjunction(e) => e,
        Truth::NoConjunction => {
            ctx.reject("no conjunction");
            return Ok(());
        }
        Truth::Failed(f) => {
            ctx.reject(f.label());
            return Ok(());
        }
    };
    let needed = indices.iter().max().map_or(0, |k| k + 1);
    let estimates = match issue_cdm_estimates(
        &event,
        &config.target_sensor,
        &config.chaser_sensor,
        &config.issue_params(),
        &config.propagator,
        config.window(),
        needed,
        ctx.aux_rng(),
    ) {
        Ok(e) => e,
        Err(e) => {
            ctx.reject(cdm_failure(e)?.label());
            return Ok(());
        }
    };
    if estimates.len() < needed {
        ctx.reject("fewer messages");
        return Ok(());
    }
    for &k in indices {
        let e = &estimates[k];
        let sim = EventObservation::from_states(e.tca_estimate, &e.target_state, &e.chaser_state)?;
        for ((_, value), name) in sim.values().into_iter().zip(observation_names(k)) {
            let dist = observable_distribution(&name, value, &config.likelihood_sigmas);
            ctx.observe(&name, &dist, value)?;
        }
    }
    Ok(())
}

/// Likelihood-weighted posterior over the latent sites given the selected
/// messages of `observed`.
pub fn infer_event(
    observed: &CdmSeries,
    config: &ScenarioConfig,
    n_samples: usize,
    seed: u64,
    condition_on: ConditionOn,
) -> Result<WeightedPosterior, ScenarioError> {
    config.validate()?;
    if observed.records.is_empty() {
        return Err(ScenarioError::InvalidArgument("observed series has no messages".into()));
    }
    let indices = condition_on.indices(observed.records.len());
    let mut observations = Observations::new();
    for &k in &indices {
        let record = observed.records.get(k).ok_or_else(|| {
            ScenarioError::InvalidArgument(format!(
                "message index {k} out of range for a series of {}",
                observed.records.len()
            ))
        })?;
        let obs = EventObservation::from_record(record)?;
        for ((_, value), name) in obs.values().into_iter().zip(observation_names(k)) {
            observations.insert(name, value);
        }
    }
    let model = |ctx: &mut TraceContext<'_>| {
        conditioned_model(ctx, config, &indices).map_err(|e| match e {
            ScenarioError::Ppl(p) => p,
            other => PplError::Model(other.to_string()),
        })
    };
    Ok(importance_sample(model, &observations, n_samples, seed)?)
}
