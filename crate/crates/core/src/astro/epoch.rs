use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Seconds relative to the scenario reference instant (t = 0 at scenario start).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epoch(f64);

impl Epoch {
    pub const ZERO: Epoch = Epoch(0.0);

    pub const fn from_seconds(seconds: f64) -> Self {
        Epoch(seconds)
    }

    pub fn from_days(days: f64) -> Self {
        Epoch(days * crate::constants::SECONDS_PER_DAY)
    }

    pub const fn seconds(self) -> f64 {
        self.0
    }

    pub fn days(self) -> f64 {
        self.0 / crate::constants::SECONDS_PER_DAY
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Add<f64> for Epoch {
    type Output = Epoch;
    fn add(self, rhs: f64) -> Epoch {
        Epoch(self.0 + rhs)
    }
}

impl Sub<f64> for Epoch {
    type Output = Epoch;
    fn sub(self, rhs: f64) -> Epoch {
        Epoch(self.0 - rhs)
    }
}

/// Difference of two epochs in seconds.
impl Sub for Epoch {
    type Output = f64;
    fn sub(self, rhs: Epoch) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{:+.3}s", self.0)
    }
}
