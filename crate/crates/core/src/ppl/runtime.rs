use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Distribution, ObservationEntry, PplError, Trace, TraceEntry};
use super::trace::Address;
use crate::rng::StreamRng;

/// Named observed values to condition on.
pub type Observations = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Forward simulation: observe sites score the value the program generated.
    Prior,
    /// Observe sites score the supplied value of the same name.
    Conditioned(&'a Observations),
}

/// Handle a running program uses for all of its randomness and scoring.
pub struct TraceContext<'a> {
    mode: Mode<'a>,
    rng: StreamRng,
    aux: StreamRng,
    trace: Trace,
    instances: HashMap<String, usize>,
    emitted: HashSet<String>,
}

impl<'a> TraceContext<'a> {
    /// `rng` drives the sample statements; `aux` is handed to the program for
    /// nuisance randomness that is not tracked as a latent variable.
    pub fn new(mode: Mode<'a>, rng: StreamRng, aux: StreamRng) -> Self {
        TraceContext {
            mode,
            rng,
            aux,
            trace: Trace::default(),
            instances: HashMap::new(),
            emitted: HashSet::new(),
        }
    }

    /// Draws a value at the sample statement labelled `lexical_id`.
    pub fn sample(&mut self, lexical_id: &str, dist: &Distribution) -> f64 {
        let instance = {
            let counter = self.instances.entry(lexical_id.to_string()).or_insert(0);
            let i = *counter;
            *counter += 1;
            i
        };
        let value = dist.sample(&mut self.rng);
        let log_prior = dist.log_density(value);
        self.trace.log_prior += log_prior;
        self.trace.entries.push(TraceEntry {
            address: Address::new(lexical_id, instance),
            value,
            log_prior,
        });
        value
    }

    /// Scores an observation. In prior mode `generated` is scored; when
    /// conditioned, the observed value under `name` is scored instead. Returns
    /// the value that was scored.
    pub fn observe(&mut self, name: &str, dist: &Distribution, generated: f64) -> Result<f64, PplError> {
        if !self.emitted.insert(name.to_string()) {
            return Err(PplError::StructuralMismatch(format!("observation '{name}' emitted twice")));
        }
        let value = match self.mode {
            Mode::Prior => generated,
            Mode::Conditioned(obs) => *obs.get(name).ok_or_else(|| {
                PplError::StructuralMismatch(format!("model observed '{name}' which is not in the conditioning set"))
            })?,
        };
        let log_likelihood = dist.log_density(value);
        self.trace.log_likelihood += log_likelihood;
        self.trace.observations.push(ObservationEntry {
            name: name.to_string(),
            value,
            log_likelihood,
            preceding_samples: self.trace.entries.len(),
        });
        Ok(value)
    }

    /// Marks the execution as impossible under the conditioning (weight zero).
    pub fn reject(&mut self, reason: impl Into<String>) {
        self.trace.log_likelihood = f64::NEG_INFINITY;
        if self.trace.rejection.is_none() {
            self.trace.rejection = Some(reason.into());
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.trace.rejection.is_some()
    }

    pub fn aux_rng(&mut self) -> &mut StreamRng {
        &mut self.aux
    }

    pub fn mode(&self) -> Mode<'a> {
        self.mode
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn finish(self) -> Result<Trace, PplError> {
        if let (Mode::Conditioned(obs), None) = (self.mode, &self.trace.rejection) {
            let missing: Vec<&String> = obs.keys().filter(|k| !self.emitted.contains(*k)).collect();
            if !missing.is_empty() {
                return Err(PplError::StructuralMismatch(format!(
                    "conditioned observations never emitted by the model: {missing:?}"
                )));
            }
        }
        Ok(self.trace)
    }
}

/// Runs `model` once and returns its output with the recorded trace.
pub fn run_model<T, F>(model: F, mode: Mode<'_>, rng: StreamRng, aux: StreamRng) -> Result<(T, Trace), PplError>
where
    F: FnOnce(&mut TraceContext<'_>) -> Result<T, PplError>,
{
    let mut ctx = TraceContext::new(mode, rng, aux);
    let out = model(&mut ctx)?;
    Ok((out, ctx.finish()?))
}
