//! Scalar distributions used at sample and observe sites and in population priors.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::astro::{angle_difference, normalize_angle};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// A scalar distribution with a log-density and a sampler.
///
/// `log_density` is `-inf` outside the support. `PointMass` and `Bernoulli`
/// are scored against counting measure, the others against Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Piecewise-uniform density; `masses[i]` is the probability of `[edges[i], edges[i+1])`.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
    Bernoulli { p: f64 },
    MixtureOfTruncatedNormals { components: Vec<MixtureComponent> },
    PointMass { value: f64 },
    /// Normal density on the circle, evaluated at the shortest angular distance to `mean`.
    WrappedNormal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid distribution: {0}")]
pub struct DistributionError(pub String);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), DistributionError> {
    if cond {
        Ok(())
    } else {
        Err(DistributionError(msg()))
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
}

/// Probability mass of a standard normal between `alpha` and `beta`, computed on
/// the tail where the CDF is accurate.
fn std_normal_mass(alpha: f64, beta: f64) -> f64 {
    if alpha > 0.0 {
        std_normal_cdf(-alpha) - std_normal_cdf(-beta)
    } else {
        std_normal_cdf(beta) - std_normal_cdf(alpha)
    }
}

fn truncated_normal_log_pdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if x < lo || x > hi {
        return f64::NEG_INFINITY;
    }
    let mass = std_normal_mass((lo - mean) / sd, (hi - mean) / sd);
    normal_log_pdf(x, mean, sd) - mass.ln()
}

fn truncated_normal_cdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        return 0.0;
    }
    if x >= hi {
        return 1.0;
    }
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    (std_normal_mass(a, (x - mean) / sd) / std_normal_mass(a, b)).clamp(0.0, 1.0)
}

fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = ((lo - mean) / sd, (hi - mean) / sd);
    // Work in the lower tail, where the CDF keeps its relative precision.
    let flip = a > 0.0;
    if flip {
        (a, b) = (-b, -a);
    }
    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
    let u: f64 = rng.random();
    let z = if pb > pa {
        std_normal_quantile(pa + u * (pb - pa)).clamp(a, b)
    } else {
        // Interval too far in the tail to resolve: fall back to its midpoint.
        0.5 * (a + b)
    };
    let z = if flip { -z } else { z };
    (mean + sd * z).clamp(lo, hi)
}

impl Distribution {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Distribution::Normal { mean, sd }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Distribution::Uniform { lo, hi }
    }

    /// Histogram with masses rescaled to sum to one.
    pub fn histogram(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self, DistributionError> {
        let total: f64 = masses.iter().sum();
        check(total > 0.0 && total.is_finite(), || format!("histogram total mass {total}"))?;
        let d = Distribution::Histogram {
            edges,
            masses: masses.iter().map(|m| m / total).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        use Distribution::*;
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Normal { mean, sd } | WrappedNormal { mean, sd } => {
                check(finite(&[*mean, *sd]) && *sd > 0.0, || format!("normal needs finite mean and sd > 0: {self:?}"))
            }
            TruncatedNormal { mean, sd, lo, hi } => {
                check(finite(&[*mean, *sd]) && *sd > 0.0 && lo < hi && !lo.is_nan() && !hi.is_nan(), || {
                    format!("truncated normal needs sd > 0 and lo < hi: {self:?}")
                })?;
                let mass = std_normal_mass((lo - mean) / sd, (hi - mean) / sd);
                check(mass > 0.0, || format!("truncation interval carries no mass: {self:?}"))
            }
            Uniform { lo, hi } => check(finite(&[*lo, *hi]) && lo < hi, || format!("uniform needs lo < hi: {self:?}")),
            LogUniform { lo, hi } => check(finite(&[*lo, *hi]) && *lo > 0.0 && lo < hi, || {
                format!("log-uniform needs 0 < lo < hi: {self:?}")
            }),
            Histogram { edges, masses } => {
                check(edges.len() >= 2 && edges.len() == masses.len() + 1, || {
                    format!("histogram needs {} edges for {} masses", masses.len() + 1, masses.len())
                })?;
                check(finite(edges) && edges.windows(2).all(|w| w[0] < w[1]), || {
                    "histogram edges must be finite and strictly increasing".into()
                })?;
                check(masses.iter().all(|m| m.is_finite() && *m >= 0.0), || "histogram masses must be >= 0".into())?;
                let total: f64 = masses.iter().sum();
                check((total - 1.0).abs() < 1e-9, || format!("histogram masses sum to {total}, expected 1"))
            }
            Bernoulli { p } => check((0.0..=1.0).contains(p), || format!("bernoulli p={p} outside [0,1]")),
            MixtureOfTruncatedNormals { components } => {
                check(!components.is_empty(), || "mixture needs at least one component".into())?;
                let total: f64 = components.iter().map(|c| c.weight).sum();
                check(components.iter().all(|c| c.weight >= 0.0 && c.weight.is_finite()), || {
                    "mixture weights must be >= 0".into()
                })?;
                check((total - 1.0).abs() < 1e-9, || format!("mixture weights sum to {total}, expected 1"))?;
                for c in components {
                    TruncatedNormal { mean: c.mean, sd: c.sd, lo: c.lo, hi: c.hi }.validate()?;
                }
                Ok(())
            }
            PointMass { value } => check(value.is_finite(), || "point mass value must be finite".into()),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        use Distribution::*;
        if x.is_nan() {
            return f64::NEG_INFINITY;
        }
        match self {
            Normal { mean, sd } => normal_log_pdf(x, *mean, *sd),
            WrappedNormal { mean, sd } => normal_log_pdf(angle_difference(x, *mean), 0.0, *sd),
            TruncatedNormal { mean, sd, lo, hi } => truncated_normal_log_pdf(x, *mean, *sd, *lo, *hi),
            Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            LogUniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    -(x * (hi / lo).ln()).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Histogram { edges, masses } => match histogram_bin(edges, x) {
                Some(i) if masses[i] > 0.0 => (masses[i] / (edges[i + 1] - edges[i])).ln(),
                _ => f64::NEG_INFINITY,
            },
            Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            MixtureOfTruncatedNormals { components } => {
                let terms: Vec<f64> = components
                    .iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| c.weight.ln() + truncated_normal_log_pdf(x, c.mean, c.sd, c.lo, c.hi))
                    .collect();
                log_sum_exp(&terms)
            }
            PointMass { value } => {
                if x == *value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use Distribution::*;
        match self {
            Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            WrappedNormal { mean, sd } => normalize_angle(mean + sd * rng.sample::<f64, _>(StandardNormal)),
            TruncatedNormal { mean, sd, lo, hi } => sample_truncated_normal(rng, *mean, *sd, *lo, *hi),
            Uniform { lo, hi } => {
                let u: f64 = rng.random();
                // Stay inside [lo, hi) even when rounding would land on hi.
                let x = lo + u * (hi - lo);
                if x >= *hi {
                    *lo
                } else {
                    x
                }
            }
            LogUniform { lo, hi } => {
                let u: f64 = rng.random();
                (lo.ln() + u * (hi / lo).ln()).exp().clamp(*lo, *hi)
            }
            Histogram { edges, masses } => {
                let i = pick_index(rng, masses);
                let u: f64 = rng.random();
                let x = edges[i] + u * (edges[i + 1] - edges[i]);
                x.min(edges[i + 1]).max(edges[i])
            }
            Bernoulli { p } => {
                let u: f64 = rng.random();
                if u < *p {
                    1.0
                } else {
                    0.0
                }
            }
            MixtureOfTruncatedNormals { components } => {
                let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let c = &components[pick_index(rng, &weights)];
                sample_truncated_normal(rng, c.mean, c.sd, c.lo, c.hi)
            }
            PointMass { value } => *value,
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        use Distribution::*;
        match self {
            Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            WrappedNormal { mean, sd } => {
                // CDF on [0, 2π) of the wrapped density, by summing the nearby images.
                let x = x.clamp(0.0, 2.0 * PI);
                (-3..=3)
                    .map(|k| {
                        let shift = mean + 2.0 * PI * k as f64;
                        std_normal_cdf((x - shift) / sd) - std_normal_cdf((0.0 - shift) / sd)
                    })
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            }
            TruncatedNormal { mean, sd, lo, hi } => truncated_normal_cdf(x, *mean, *sd, *lo, *hi),
            Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            LogUniform { lo, hi } => {
                if x <= *lo {
                    0.0
                } else {
                    ((x / lo).ln() / (hi / lo).ln()).clamp(0.0, 1.0)
                }
            }
            Histogram { edges, masses } => {
                let mut acc = 0.0;
                for (i, m) in masses.iter().enumerate() {
                    let (l, r) = (edges[i], edges[i + 1]);
                    if x >= r {
                        acc += m;
                    } else if x > l {
                        acc += m * (x - l) / (r - l);
                    }
                }
                acc.clamp(0.0, 1.0)
            }
            Bernoulli { p } => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            MixtureOfTruncatedNormals { components } => components
                .iter()
                .map(|c| c.weight * truncated_normal_cdf(x, c.mean, c.sd, c.lo, c.hi))
                .sum::<f64>()
                .clamp(0.0, 1.0),
            PointMass { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Probability of `[lo, hi)` (with the point mass at `lo` included).
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Distribution::PointMass { value } => {
                if *value >= lo && *value < hi {
                    1.0
                } else {
                    0.0
                }
            }
            _ => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }

    /// Smallest interval containing the support, if bounded.
    pub fn support(&self) -> (f64, f64) {
        use Distribution::*;
        match self {
            Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            WrappedNormal { .. } => (0.0, 2.0 * PI),
            TruncatedNormal { lo, hi, .. } | Uniform { lo, hi } | LogUniform { lo, hi } => (*lo, *hi),
            Histogram { edges, .. } => (edges[0], edges[edges.len() - 1]),
            Bernoulli { .. } => (0.0, 1.0),
            MixtureOfTruncatedNormals { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), c| (l.min(c.lo), h.max(c.hi))),
            PointMass { value } => (*value, *value),
        }
    }
}

/// Index of the histogram bin holding `x`; the last bin is closed on the right.
pub fn histogram_bin(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len();
    if n < 2 || !(x >= edges[0] && x <= edges[n - 1]) {
        return None;
    }
    if x == edges[n - 1] {
        return Some(n - 2);
    }
    // First edge strictly greater than x.
    let upper = edges.partition_point(|&e| e <= x);
    Some(upper - 1)
}

fn pick_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// `log Σ exp(x_i)`, `-inf` for an empty slice or all `-inf` terms.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
