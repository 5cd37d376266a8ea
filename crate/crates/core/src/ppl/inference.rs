use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::{histogram_bin, log_sum_exp};
use super::runtime::{run_model, Mode, Observations, TraceContext};
use super::{PplError, Trace};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub trace: Trace,
    pub log_weight: f64,
}

/// Importance-weighted traces. Weights are kept in log space and may be −∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPosterior {
    pub samples: Vec<WeightedSample>,
    /// log Σ exp(log_weight)
    pub log_normalizer: f64,
}

impl WeightedPosterior {
    pub fn from_samples(samples: Vec<WeightedSample>) -> Self {
        let lw: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
        WeightedPosterior {
            log_normalizer: log_sum_exp(&lw),
            samples,
        }
    }

    /// Posterior over empty traces with the given log weights; handy for diagnostics.
    pub fn from_log_weights(log_weights: &[f64]) -> Self {
        Self::from_samples(
            log_weights
                .iter()
                .map(|&log_weight| WeightedSample {
                    trace: Trace::default(),
                    log_weight,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn finite_count(&self) -> usize {
        self.samples.iter().filter(|s| s.log_weight.is_finite()).count()
    }

    /// Self-normalized weights. Fails when no weight is finite.
    pub fn normalized_weights(&self) -> Result<Vec<f64>, PplError> {
        if !self.log_normalizer.is_finite() {
            return Err(self.degenerate_error());
        }
        Ok(self
            .samples
            .iter()
            .map(|s| (s.log_weight - self.log_normalizer).exp())
            .collect())
    }

    /// Returns a copy with every log weight shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self::from_samples(
            self.samples
                .iter()
                .map(|s| WeightedSample {
                    trace: s.trace.clone(),
                    log_weight: s.log_weight + c,
                })
                .collect(),
        )
    }

    fn degenerate_error(&self) -> PplError {
        let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
        for s in &self.samples {
            let key = s.trace.rejection.clone().unwrap_or_else(|| "zero likelihood".to_string());
            *reasons.entry(key).or_default() += 1;
        }
        PplError::DegeneratePosterior {
            n: self.samples.len(),
            reasons,
        }
    }
}

/// Likelihood weighting: `n` prior executions of `model`, each weighted by its
/// log-likelihood under `observations`.
///
/// Trace `i` draws from sub-streams `2i` (sample sites) and `2i + 1` (auxiliary)
/// of `seed`, so the result does not depend on thread scheduling.
pub fn importance_sample<T, F>(model: F, observations: &Observations, n: usize, seed: u64) -> Result<WeightedPosterior, PplError>
where
    F: Fn(&mut TraceContext<'_>) -> Result<T, PplError> + Sync,
{
    if n == 0 {
        return Err(PplError::InvalidArgument("importance sampling needs n >= 1".into()));
    }
    let samples: Result<Vec<WeightedSample>, PplError> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (_, trace) = run_model(
                &model,
                Mode::Conditioned(observations),
                substream(seed, 2 * i),
                substream(seed, 2 * i + 1),
            )?;
            let log_weight = trace.log_likelihood;
            Ok(WeightedSample { trace, log_weight })
        })
        .collect();
    let posterior = WeightedPosterior::from_samples(samples?);
    if !posterior.log_normalizer.is_finite() {
        return Err(posterior.degenerate_error());
    }
    Ok(posterior)
}

/// Self-normalized estimate of `E[f(x) | y]`.
pub fn posterior_expectation<F>(p: &WeightedPosterior, f: F) -> Result<f64, PplError>
where
    F: Fn(&Trace) -> f64,
{
    let w = p.normalized_weights()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, wi) in p.samples.iter().zip(&w) {
        if *wi > 0.0 {
            num += wi * f(&s.trace);
            den += wi;
        }
    }
    Ok(num / den)
}

/// Delta-method standard error of the self-normalized estimate,
/// `sqrt(Σ w̃² (f − μ̂)²)`.
pub fn posterior_standard_error<F>(p: &WeightedPosterior, f: F) -> Result<f64, PplError>
where
    F: Fn(&Trace) -> f64,
{
    let mean = posterior_expectation(p, &f)?;
    let w = p.normalized_weights()?;
    let var: f64 = p
        .samples
        .iter()
        .zip(&w)
        .filter(|(_, wi)| **wi > 0.0)
        .map(|(s, wi)| {
            let d = f(&s.trace) - mean;
            wi * wi * d * d
        })
        .sum();
    Ok(var.sqrt())
}

/// Weighted variance of `f` under the posterior.
pub fn posterior_variance<F>(p: &WeightedPosterior, f: F) -> Result<f64, PplError>
where
    F: Fn(&Trace) -> f64,
{
    let mean = posterior_expectation(p, &f)?;
    posterior_expectation(p, |t| {
        let d = f(t) - mean;
        d * d
    })
}

/// (Σw)² / Σw² over the normalized weights.
pub fn effective_sample_size(p: &WeightedPosterior) -> f64 {
    let Ok(w) = p.normalized_weights() else {
        return 0.0;
    };
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl WeightedHistogram {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.masses.iter().filter(|m| **m > 0.0).count()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mean of the bin centers under the (renormalized) masses.
    pub fn mean(&self) -> f64 {
        let total = self.total_mass();
        self.centers().iter().zip(&self.masses).map(|(c, m)| c * m).sum::<f64>() / total
    }

    /// Total-variation distance between the renormalized masses of two
    /// histograms on the same bins.
    pub fn total_variation(&self, other: &WeightedHistogram) -> f64 {
        assert_eq!(self.masses.len(), other.masses.len(), "histograms must share bins");
        let (ta, tb) = (self.total_mass(), other.total_mass());
        0.5 * self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (a / ta - b / tb).abs())
            .sum::<f64>()
    }
}

fn site_values(p: &WeightedPosterior, lexical_id: &str, instance: usize) -> Vec<(usize, f64)> {
    p.samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.trace.get(lexical_id, instance).map(|v| (i, v)))
        .collect()
}

/// Weighted histogram of the values drawn at `(lexical_id, instance)`.
///
/// Bins span the range of values seen in finite-weight traces; a single repeated
/// value gets a unit-wide range around it. Masses sum to the normalized weight
/// carried by traces that contain the site.
pub fn posterior_marginal(
    p: &WeightedPosterior,
    lexical_id: &str,
    instance: usize,
    bins: usize,
) -> Result<WeightedHistogram, PplError> {
    if bins == 0 {
        return Err(PplError::InvalidArgument("histogram needs at least one bin".into()));
    }
    let w = p.normalized_weights()?;
    let values: Vec<f64> = site_values(p, lexical_id, instance)
        .into_iter()
        .filter(|(i, _)| w[*i] > 0.0)
        .map(|(_, v)| v)
        .collect();
    if values.is_empty() {
        return Err(PplError::SiteAbsent(format!("{lexical_id}#{instance}")));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + (hi - lo) * k as f64 / bins as f64 })
        .collect();
    posterior_marginal_with_edges(p, lexical_id, instance, &edges)
}

/// Weighted histogram on caller-chosen bin edges; values outside are dropped.
pub fn posterior_marginal_with_edges(
    p: &WeightedPosterior,
    lexical_id: &str,
    instance: usize,
    edges: &[f64],
) -> Result<WeightedHistogram, PplError> {
    let w = p.normalized_weights()?;
    let values = site_values(p, lexical_id, instance);
    if !values.iter().any(|(i, _)| w[*i] > 0.0) {
        return Err(PplError::SiteAbsent(format!("{lexical_id}#{instance}")));
    }
    let mut masses = vec![0.0; edges.len().saturating_sub(1)];
    for (i, v) in values {
        if let Some(b) = histogram_bin(edges, v) {
            masses[b] += w[i];
        }
    }
    Ok(WeightedHistogram {
        edges: edges.to_vec(),
        masses,
    })
}

/// Unweighted histogram of the proposals at a site, i.e. the empirical prior
/// marginal under likelihood weighting.
pub fn proposal_marginal(p: &WeightedPosterior, lexical_id: &str, instance: usize, edges: &[f64]) -> WeightedHistogram {
    let values = site_values(p, lexical_id, instance);
    let n = p.samples.len() as f64;
    let mut masses = vec![0.0; edges.len().saturating_sub(1)];
    for (_, v) in values {
        if let Some(b) = histogram_bin(edges, v) {
            masses[b] += 1.0 / n;
        }
    }
    WeightedHistogram {
        edges: edges.to_vec(),
        masses,
    }
}

/// Unweighted mean and variance of a site over all proposals.
pub fn proposal_moments(p: &WeightedPosterior, lexical_id: &str, instance: usize) -> Option<(f64, f64)> {
    let values: Vec<f64> = site_values(p, lexical_id, instance).into_iter().map(|(_, v)| v).collect();
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var))
}
