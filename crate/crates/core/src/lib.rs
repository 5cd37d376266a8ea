//! Physics-based probabilistic generative model of satellite conjunctions and
//! conjunction data message (CDM) time series, together with a small trace-based
//! probabilistic programming runtime used to invert it by importance sampling.
//!
//! Module map:
//!
//! - [`astro`]: epochs, Keplerian elements, state vectors, frames.
//! - [`propagation`]: analytic two-body/J2/drag mean-element propagator.
//! - [`population`]: LEO population priors, TLE parsing and prior fitting.
//! - [`conjunction`]: pair screening and time-of-closest-approach refinement.
//! - [`cdm`]: observation model, Monte Carlo covariance propagation, CDM issuing
//!   and serialization, encounter-plane collision probability.
//! - [`ppl`]: sample/observe runtime, likelihood weighting, posterior summaries.
//! - [`scenario`]: the end-to-end generative program, inference and calibration.

pub mod astro;
pub mod cdm;
pub mod conjunction;
pub mod constants;
pub mod population;
pub mod ppl;
pub mod propagation;
pub mod rng;
pub mod scenario;
pub mod textio;
