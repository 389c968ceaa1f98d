//! Persisted observations: a CSV of `state,node,value` rows.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservationError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("observations are empty")]
    Empty,
    #[error("expected {expected} observed states, found {found}")]
    StateCount { expected: usize, found: usize },
    #[error("observed state {state} has {found} values, expected {expected}")]
    StateLength {
        state: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid noise level {0}")]
    Noise(f64),
}

const HEADER: &str = "state,node,value";

/// Observed states, each a vector of nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub states: Vec<Vec<f64>>,
}

impl Observations {
    pub fn new(states: Vec<Vec<f64>>) -> Self {
        Self { states }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for (s, state) in self.states.iter().enumerate() {
            for (n, v) in state.iter().enumerate() {
                out.push_str(&format!("{s},{n},{v}\n"));
            }
        }
        out
    }

    /// Rows must be grouped by state with nodes numbered from 0 within each
    /// state; values must be finite.
    pub fn from_csv(text: &str) -> Result<Self, ObservationError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => {
                return Err(ObservationError::Parse {
                    line: 1,
                    reason: format!("expected header `{HEADER}`"),
                })
            }
        }
        let mut states: Vec<Vec<f64>> = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let err = |reason: String| ObservationError::Parse { line, reason };
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let state: usize = fields[0].trim().parse().map_err(|_| err(format!("bad state index {:?}", fields[0])))?;
            let node: usize = fields[1].trim().parse().map_err(|_| err(format!("bad node index {:?}", fields[1])))?;
            let value: f64 = fields[2].trim().parse().map_err(|_| err(format!("bad value {:?}", fields[2])))?;
            if !value.is_finite() {
                return Err(err("value is not finite".into()));
            }
            if state == states.len() {
                states.push(Vec::new());
            } else if states.len().checked_sub(1) != Some(state) {
                return Err(err(format!("state {state} out of order")));
            }
            let current = states.last_mut().expect("pushed above");
            if node != current.len() {
                return Err(err(format!("node {node} out of order, expected {}", current.len())));
            }
            current.push(value);
        }
        if states.is_empty() {
            return Err(ObservationError::Empty);
        }
        Ok(Self { states })
    }

    pub fn read(path: &Path) -> std::io::Result<Result<Self, ObservationError>> {
        Ok(Self::from_csv(&fs::read_to_string(path)?))
    }

    /// Adds seeded Gaussian noise of standard deviation `sigma` to every
    /// value. `sigma = 0` leaves the values untouched.
    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Result<Self, ObservationError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ObservationError::Noise(sigma));
        }
        if sigma == 0.0 {
            return Ok(self);
        }
        let normal = Normal::new(0.0, sigma).map_err(|_| ObservationError::Noise(sigma))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in self.states.iter_mut().flatten() {
            *v += normal.sample(&mut rng);
        }
        Ok(self)
    }

    /// Checks the number of states and each state's length.
    pub fn expect_shape(&self, lengths: &[usize]) -> Result<(), ObservationError> {
        if self.states.len() != lengths.len() {
            return Err(ObservationError::StateCount {
                expected: lengths.len(),
                found: self.states.len(),
            });
        }
        for (state, (s, &expected)) in self.states.iter().zip(lengths).enumerate() {
            if s.len() != expected {
                return Err(ObservationError::StateLength {
                    state,
                    expected,
                    found: s.len(),
                });
            }
        }
        Ok(())
    }
}
