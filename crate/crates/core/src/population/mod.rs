//! Priors over the low-Earth-orbit population and TLE catalog ingestion.

mod fit;
mod tle;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::astro::{semi_major_axis_from_mean_motion_rev_day, Epoch, OrbitalElements};
use crate::constants::TWO_PI;
use crate::ppl::{Distribution, DistributionError, MixtureComponent};

pub use fit::{fit_prior, BinningPolicy, LEO_MIN_MEAN_MOTION_REV_DAY};
pub use tle::{
    format_tle, parse_tle, read_catalog, tle_checksum, CatalogEntry, CatalogError, CatalogMode, CatalogRead, TleError,
    TleRecord,
};

/// Attempts allowed per object before `sample_object` gives up.
pub const DEFAULT_SAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PopulationError {
    #[error("prior: {0}")]
    InvalidPrior(String),
    #[error("no valid elements after {attempts} draws (last problem: {last})")]
    RejectionCap { attempts: usize, last: String },
    #[error("no LEO records left after filtering ({total} records read)")]
    EmptyCatalog { total: usize },
    #[error("prior file: {0}")]
    Config(String),
}

impl From<DistributionError> for PopulationError {
    fn from(e: DistributionError) -> Self {
        PopulationError::InvalidPrior(e.0)
    }
}

/// Which parameter carries the orbit size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeElement {
    /// Mean motion in rev/day.
    MeanMotion,
    /// Semi-major axis in km.
    SemiMajorAxis,
}

impl SizeElement {
    pub fn name(self) -> &'static str {
        match self {
            SizeElement::MeanMotion => "mean_motion",
            SizeElement::SemiMajorAxis => "semi_major_axis",
        }
    }

    pub fn to_semi_major_axis(self, value: f64) -> f64 {
        match self {
            SizeElement::MeanMotion => semi_major_axis_from_mean_motion_rev_day(value),
            SizeElement::SemiMajorAxis => value,
        }
    }

    pub fn from_elements(self, el: &OrbitalElements) -> f64 {
        match self {
            SizeElement::MeanMotion => el.mean_motion_rev_day(),
            SizeElement::SemiMajorAxis => el.semi_major_axis,
        }
    }
}

/// Independent marginals over the elements of one object.
///
/// Angles are in radians, mean motion in rev/day, semi-major axis in km and
/// bstar in inverse Earth radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationPrior {
    pub size_element: SizeElement,
    pub size: Distribution,
    pub eccentricity: Distribution,
    pub inclination: Distribution,
    pub raan: Distribution,
    pub arg_perigee: Distribution,
    pub mean_anomaly: Distribution,
    pub bstar: Distribution,
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

impl Default for PopulationPrior {
    fn default() -> Self {
        Self::default_leo()
    }
}

impl PopulationPrior {
    /// Bundled parametric LEO prior used when no catalog is given.
    pub fn default_leo() -> Self {
        let incl = |mean: f64, sd: f64, weight: f64| MixtureComponent {
            weight,
            mean: deg(mean),
            sd: deg(sd),
            lo: 0.0,
            hi: std::f64::consts::PI,
        };
        let mm = |mean: f64, sd: f64, weight: f64| MixtureComponent {
            weight,
            mean,
            sd,
            lo: LEO_MIN_MEAN_MOTION_REV_DAY,
            hi: 16.5,
        };
        PopulationPrior {
            size_element: SizeElement::MeanMotion,
            size: Distribution::MixtureOfTruncatedNormals {
                components: vec![mm(15.1, 0.3, 0.35), mm(14.3, 0.35, 0.45), mm(13.0, 0.6, 0.20)],
            },
            eccentricity: Distribution::LogUniform { lo: 1e-4, hi: 2e-2 },
            inclination: Distribution::MixtureOfTruncatedNormals {
                components: vec![incl(98.0, 3.0, 0.45), incl(53.0, 2.0, 0.35), incl(74.0, 3.0, 0.20)],
            },
            raan: Distribution::uniform(0.0, TWO_PI),
            arg_perigee: Distribution::uniform(0.0, TWO_PI),
            mean_anomaly: Distribution::uniform(0.0, TWO_PI),
            bstar: Distribution::LogUniform { lo: 1e-6, hi: 1e-3 },
        }
    }

    /// Every element fixed at the given values.
    pub fn point_mass(el: &OrbitalElements) -> Self {
        let pm = |value| Distribution::PointMass { value };
        PopulationPrior {
            size_element: SizeElement::SemiMajorAxis,
            size: pm(el.semi_major_axis),
            eccentricity: pm(el.eccentricity),
            inclination: pm(el.inclination),
            raan: pm(el.raan),
            arg_perigee: pm(el.arg_perigee),
            mean_anomaly: pm(el.mean_anomaly),
            bstar: pm(el.bstar),
        }
    }

    /// Distributions paired with their site names, in sampling order.
    pub fn marginals(&self) -> [(&'static str, &Distribution); 7] {
        [
            (self.size_element.name(), &self.size),
            ("eccentricity", &self.eccentricity),
            ("inclination", &self.inclination),
            ("raan", &self.raan),
            ("arg_perigee", &self.arg_perigee),
            ("mean_anomaly", &self.mean_anomaly),
            ("bstar", &self.bstar),
        ]
    }

    pub fn marginal(&self, name: &str) -> Option<&Distribution> {
        self.marginals().into_iter().find(|(n, _)| *n == name).map(|(_, d)| d)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        for (name, d) in self.marginals() {
            d.validate()
                .map_err(|e| PopulationError::InvalidPrior(format!("{name}: {}", e.0)))?;
        }
        let (lo, _) = self.eccentricity.support();
        if lo < 0.0 && matches!(self.eccentricity, Distribution::Normal { .. }) {
            return Err(PopulationError::InvalidPrior(
                "eccentricity prior must not be an unbounded normal".into(),
            ));
        }
        Ok(())
    }

    /// Builds elements from one draw per marginal (in `marginals()` order).
    pub fn elements_from_values(&self, values: [f64; 7], epoch: Epoch) -> Result<OrbitalElements, String> {
        let a = self.size_element.to_semi_major_axis(values[0]);
        let el = OrbitalElements {
            semi_major_axis: a,
            eccentricity: values[1],
            inclination: values[2],
            raan: values[3].rem_euclid(TWO_PI),
            arg_perigee: values[4].rem_euclid(TWO_PI),
            mean_anomaly: values[5].rem_euclid(TWO_PI),
            epoch,
            bstar: values[6],
        };
        el.validate().map_err(|e| e.to_string())?;
        Ok(el)
    }

    /// Sum of marginal log-densities at `el`. `-inf` outside the support.
    pub fn log_density(&self, el: &OrbitalElements) -> f64 {
        let values = [
            self.size_element.from_elements(el),
            el.eccentricity,
            el.inclination,
            el.raan,
            el.arg_perigee,
            el.mean_anomaly,
            el.bstar,
        ];
        self.marginals()
            .iter()
            .zip(values)
            .map(|((_, d), v)| d.log_density(v))
            .sum()
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PopulationError> {
        let p: PopulationPrior = toml::from_str(s).map_err(|e| PopulationError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("prior serializes to TOML")
    }
}

/// Draws one object from `prior`, redrawing the whole element set when it
/// violates the element invariants.
pub fn sample_object<R: Rng + ?Sized>(
    prior: &PopulationPrior,
    epoch: Epoch,
    rng: &mut R,
) -> Result<OrbitalElements, PopulationError> {
    sample_object_capped(prior, epoch, rng, DEFAULT_SAMPLE_CAP)
}

pub fn sample_object_capped<R: Rng + ?Sized>(
    prior: &PopulationPrior,
    epoch: Epoch,
    rng: &mut R,
    cap: usize,
) -> Result<OrbitalElements, PopulationError> {
    let mut last = String::new();
    for _ in 0..cap {
        let marg = prior.marginals();
        let mut values = [0.0; 7];
        for (v, (_, d)) in values.iter_mut().zip(marg.iter()) {
            *v = d.sample(rng);
        }
        match prior.elements_from_values(values, epoch) {
            Ok(el) => return Ok(el),
            Err(e) => last = e,
        }
    }
    Err(PopulationError::RejectionCap { attempts: cap, last })
}
