use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Failed(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Converged => f.write_str("loss tolerance reached"),
            Self::MaxIterations => f.write_str("iteration limit reached"),
            Self::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub optimizer: String,
    /// Loss before each step, plus the loss after the last one.
    pub loss_history: Vec<f64>,
    /// `(iteration, params)` pairs taken before the step of that iteration.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub final_params: Vec<f64>,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub stop_reason: StopReason,
}

#[derive(Serialize)]
struct Summary<'a> {
    optimizer: &'a str,
    iterations: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    final_params: &'a [f64],
    wall_time: f64,
    stop_reason: &'a StopReason,
}

impl RunRecord {
    pub(crate) fn new(optimizer: &str) -> Self {
        Self {
            optimizer: optimizer.to_string(),
            loss_history: Vec::new(),
            snapshots: Vec::new(),
            final_params: Vec::new(),
            iterations: 0,
            wall_time: 0.0,
            stop_reason: StopReason::MaxIterations,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.stop_reason, StopReason::Failed(_))
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.loss_history.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    /// `iter,loss` rows.
    pub fn write_loss_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,loss")?;
        for (i, l) in self.loss_history.iter().enumerate() {
            writeln!(out, "{i},{l}")?;
        }
        Ok(())
    }

    /// Compact JSON summary without the loss history and snapshots.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(Summary {
            optimizer: &self.optimizer,
            iterations: self.iterations,
            initial_loss: self.initial_loss(),
            final_loss: self.final_loss(),
            final_params: &self.final_params,
            wall_time: self.wall_time,
            stop_reason: &self.stop_reason,
        })
        .expect("summary is serializable")
    }
}
