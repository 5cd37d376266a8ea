use std::fmt;

use serde::{Deserialize, Serialize};

/// Address of one execution of a sample statement: the statement's lexical label
/// plus how many times that statement already ran in the current execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub lexical_id: String,
    pub instance: usize,
}

impl Address {
    pub fn new(lexical_id: impl Into<String>, instance: usize) -> Self {
        Address {
            lexical_id: lexical_id.into(),
            instance,
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.lexical_id, self.instance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub address: Address,
    pub value: f64,
    /// log f(x_t | x_1:t-1)
    pub log_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub name: String,
    pub value: f64,
    /// log g(y_n | x_1:tau(n))
    pub log_likelihood: f64,
    /// Number of sample entries recorded before this observation.
    pub preceding_samples: usize,
}

/// One execution of a probabilistic program.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
    pub observations: Vec<ObservationEntry>,
    pub log_prior: f64,
    pub log_likelihood: f64,
    /// Set when the program scored itself impossible (log-likelihood −∞).
    pub rejection: Option<String>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, lexical_id: &str, instance: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.address.instance == instance && e.address.lexical_id == lexical_id)
            .map(|e| e.value)
    }

    pub fn observation(&self, name: &str) -> Option<&ObservationEntry> {
        self.observations.iter().find(|o| o.name == name)
    }

    pub fn log_joint(&self) -> f64 {
        self.log_prior + self.log_likelihood
    }
}
