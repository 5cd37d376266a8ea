//! A small trace-based probabilistic programming runtime.
//!
//! Programs are closures over a [`TraceContext`]. `sample` draws a latent value
//! at an address `(lexical_id, instance)`, `observe` adds a log-likelihood term.
//! The trace records every draw with its prior log-density and every observation
//! with its likelihood term, so `log_prior + log_likelihood` is the log joint
//! density of the execution. Inference is likelihood weighting: prior proposals
//! weighted by their likelihood.

mod distribution;
mod inference;
mod runtime;
mod trace;

use std::collections::BTreeMap;

pub use distribution::{
    histogram_bin, log_sum_exp, normal_log_pdf, std_normal_cdf, std_normal_quantile, Distribution, DistributionError,
    MixtureComponent,
};
pub use inference::{
    effective_sample_size, importance_sample, posterior_expectation, posterior_marginal, posterior_marginal_with_edges,
    posterior_standard_error, posterior_variance, proposal_marginal, proposal_moments, WeightedHistogram,
    WeightedPosterior, WeightedSample,
};
pub use runtime::{run_model, Mode, Observations, TraceContext};
pub use trace::{Address, ObservationEntry, Trace, TraceEntry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PplError {
    #[error("structural mismatch between model and observations: {0}")]
    StructuralMismatch(String),
    #[error("degenerate posterior: all {n} importance weights are zero ({reasons:?}); increase the sample count or widen the likelihood")]
    DegeneratePosterior { n: usize, reasons: BTreeMap<String, usize> },
    #[error("site {0} does not appear in any trace with nonzero weight")]
    SiteAbsent(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model error: {0}")]
    Model(String),
}
