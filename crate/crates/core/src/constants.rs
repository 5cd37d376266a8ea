//! Physical constants shared by every module.

/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH: f64 = 398_600.441_8;
/// Earth equatorial radius, km.
pub const EARTH_RADIUS: f64 = 6_378.137;
/// Second zonal harmonic.
pub const J2: f64 = 1.082_626_68e-3;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Grouped view of the constants, for callers that want to pass them around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu: f64,
    pub earth_radius: f64,
    pub j2: f64,
}

impl Constants {
    pub const EARTH: Constants = Constants {
        mu: MU_EARTH,
        earth_radius: EARTH_RADIUS,
        j2: J2,
    };
}

impl Default for Constants {
    fn default() -> Self {
        Self::EARTH
    }
}
