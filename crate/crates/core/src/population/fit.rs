use serde::{Deserialize, Serialize};

use super::{PopulationError, PopulationPrior, SizeElement, TleRecord};
use crate::astro::semi_major_axis_from_mean_motion_rev_day;
use crate::constants::TWO_PI;
use crate::ppl::Distribution;

/// Period below 128 minutes.
pub const LEO_MIN_MEAN_MOTION_REV_DAY: f64 = 11.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningPolicy {
    /// Bins spanning the observed range, excluding the two empty guard bins.
    pub bins: usize,
    pub size_element: SizeElement,
}

impl Default for BinningPolicy {
    fn default() -> Self {
        BinningPolicy {
            bins: 30,
            size_element: SizeElement::MeanMotion,
        }
    }
}

/// Histogram on `bins` equal bins over `[min, max]` of `values`, plus one empty
/// guard bin on each side. A constant sample gets a single narrow bin.
fn fit_histogram(values: &[f64], bins: usize) -> Distribution {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (edges, inner) = if hi > lo {
        let w = (hi - lo) / bins as f64;
        let mut edges = Vec::with_capacity(bins + 3);
        edges.push(lo - w);
        for k in 0..=bins {
            edges.push(if k == bins { hi } else { lo + w * k as f64 });
        }
        edges.push(hi + w);
        (edges, bins)
    } else {
        let w = (lo.abs() * 1e-6).max(1e-9);
        (vec![lo - 1.5 * w, lo - 0.5 * w, lo + 0.5 * w, lo + 1.5 * w], 1)
    };
    let mut masses = vec![0.0; inner + 2];
    let n = values.len() as f64;
    for &v in values {
        // the top edge belongs to the last inner bin
        let b = if v >= edges[inner + 1] {
            inner
        } else {
            edges.partition_point(|e| *e <= v) - 1
        };
        masses[b] += 1.0 / n;
    }
    Distribution::Histogram { edges, masses }
}

/// Empirical histogram prior from a catalog snapshot.
///
/// Records with mean motion at or below the LEO limit are dropped. Size,
/// eccentricity, inclination and bstar get histograms; the three angles are
/// uniform on `[0, 2π)` whatever the data say.
pub fn fit_prior(records: &[TleRecord], policy: &BinningPolicy) -> Result<PopulationPrior, PopulationError> {
    if policy.bins == 0 {
        return Err(PopulationError::InvalidPrior("binning needs at least one bin".into()));
    }
    let leo: Vec<&TleRecord> = records
        .iter()
        .filter(|r| r.mean_motion > LEO_MIN_MEAN_MOTION_REV_DAY)
        .collect();
    if leo.is_empty() {
        return Err(PopulationError::EmptyCatalog { total: records.len() });
    }
    let column = |f: &dyn Fn(&TleRecord) -> f64| leo.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let size = match policy.size_element {
        SizeElement::MeanMotion => column(&|r| r.mean_motion),
        SizeElement::SemiMajorAxis => column(&|r| semi_major_axis_from_mean_motion_rev_day(r.mean_motion)),
    };
    let prior = PopulationPrior {
        size_element: policy.size_element,
        size: fit_histogram(&size, policy.bins),
        eccentricity: fit_histogram(&column(&|r| r.eccentricity), policy.bins),
        inclination: fit_histogram(&column(&|r| r.inclination.to_radians()), policy.bins),
        raan: Distribution::uniform(0.0, TWO_PI),
        arg_perigee: Distribution::uniform(0.0, TWO_PI),
        mean_anomaly: Distribution::uniform(0.0, TWO_PI),
        bstar: fit_histogram(&column(&|r| r.bstar), policy.bins),
    };
    prior.validate()?;
    Ok(prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_bins_are_empty() {
        let Distribution::Histogram { edges, masses } = fit_histogram(&[1.0, 2.0, 3.0, 4.0], 3) else {
            unreachable!()
        };
        assert_eq!(edges.len(), 6);
        assert_eq!(masses[0], 0.0);
        assert_eq!(*masses.last().unwrap(), 0.0);
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((masses[3] - 0.5).abs() < 1e-15);
    }
}
