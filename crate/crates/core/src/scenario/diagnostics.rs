use serde::Serialize;

use super::ScenarioError;
use crate::ppl::{
    effective_sample_size, posterior_expectation, posterior_marginal_with_edges, posterior_variance,
    proposal_marginal, proposal_moments, WeightedPosterior,
};

/// Bins used for the prior-vs-posterior total-variation distance.
pub const TV_BINS: usize = 20;

/// Prior (proposal) and posterior moments of one latent site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSummary {
    pub site: String,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub posterior_mean: f64,
    pub posterior_variance: f64,
    /// `posterior_variance / prior_variance`; NaN for a point-mass prior.
    pub variance_ratio: f64,
    /// Over [`TV_BINS`] equal bins spanning the proposals.
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorDiagnostics {
    pub n_samples: usize,
    pub nonzero_weights: usize,
    pub ess: f64,
    pub log_normalizer: f64,
    pub sites: Vec<SiteSummary>,
}

/// Moments and prior distance of every site in `sites`. The prior is the
/// unweighted set of proposals.
pub fn posterior_diagnostics(p: &WeightedPosterior, sites: &[String]) -> Result<PosteriorDiagnostics, ScenarioError> {
    let mut out = Vec::with_capacity(sites.len());
    for site in sites {
        let value = |t: &crate::ppl::Trace| t.get(site, 0).unwrap_or(f64::NAN);
        let (prior_mean, prior_variance) = proposal_moments(p, site, 0)
            .ok_or_else(|| ScenarioError::InvalidArgument(format!("site {site} needs at least two proposals")))?;
        let posterior_mean = posterior_expectation(p, value)?;
        let posterior_variance = posterior_variance(p, value)?;
        let (lo, hi) = p
            .samples
            .iter()
            .filter_map(|s| s.trace.get(site, 0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let total_variation = if hi > lo {
            let edges: Vec<f64> = (0..=TV_BINS)
                .map(|k| if k == TV_BINS { hi } else { lo + (hi - lo) * k as f64 / TV_BINS as f64 })
                .collect();
            let post = posterior_marginal_with_edges(p, site, 0, &edges)?;
            post.total_variation(&proposal_marginal(p, site, 0, &edges))
        } else {
            0.0
        };
        out.push(SiteSummary {
            site: site.clone(),
            prior_mean,
            prior_variance,
            posterior_mean,
            posterior_variance,
            variance_ratio: if hi > lo {
                posterior_variance / prior_variance
            } else {
                f64::NAN
            },
            total_variation,
        });
    }
    Ok(PosteriorDiagnostics {
        n_samples: p.len(),
        nonzero_weights: p.finite_count(),
        ess: effective_sample_size(p),
        log_normalizer: p.log_normalizer,
        sites: out,
    })
}
