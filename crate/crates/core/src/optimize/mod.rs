//! Gradient-based parameter identification: optimizers, box constraints and
//! the optimization loop.

mod loss;
mod record;

pub use loss::{tracking_loss, weighted_norm, Averaging, LossSpec, NormKind, Regularization};
pub use record::{RunRecord, StopReason};

use std::fmt::Display;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("gradient entry {index} is not finite ({value})")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("expected {expected} values, got {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
}

/// Parameter vector with optional elementwise box constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedParams {
    values: Vec<f64>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

impl BoundedParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            lower: None,
            upper: None,
        }
    }

    /// Attaches bounds and projects the current values onto them.
    pub fn with_bounds(mut self, lower: Option<Vec<f64>>, upper: Option<Vec<f64>>) -> Result<Self, OptimizeError> {
        let n = self.values.len();
        for b in [&lower, &upper].into_iter().flatten() {
            if b.len() != n {
                return Err(OptimizeError::Length {
                    expected: n,
                    found: b.len(),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(OptimizeError::InvalidBounds("bounds must be finite".into()));
            }
        }
        if let (Some(lo), Some(hi)) = (&lower, &upper) {
            if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
                return Err(OptimizeError::InvalidBounds(format!(
                    "lower bound {} exceeds upper bound {} at index {i}",
                    lo[i], hi[i]
                )));
            }
        }
        self.lower = lower;
        self.upper = upper;
        self.project();
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lower(&self) -> Option<&[f64]> {
        self.lower.as_deref()
    }

    pub fn upper(&self) -> Option<&[f64]> {
        self.upper.as_deref()
    }

    /// Clamps every value into `[lower, upper]`.
    pub fn project(&mut self) {
        if let Some(lo) = &self.lower {
            self.values.iter_mut().zip(lo).for_each(|(v, l)| *v = v.max(*l));
        }
        if let Some(hi) = &self.upper {
            self.values.iter_mut().zip(hi).for_each(|(v, h)| *v = v.min(*h));
        }
    }

    /// Registers the values as a gradient-tracking leaf.
    pub fn register(&self, tape: &mut Tape) -> VarId {
        tape.param(self.values.clone())
    }
}

pub trait Optimizer {
    /// Updates `params` in place. On error nothing is modified.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), OptimizeError>;

    fn name(&self) -> &'static str;
}

fn check_grad(params: &[f64], grad: &[f64]) -> Result<(), OptimizeError> {
    if params.len() != grad.len() {
        return Err(OptimizeError::Length {
            expected: params.len(),
            found: grad.len(),
        });
    }
    if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(OptimizeError::NonFiniteGradient { index, value });
    }
    Ok(())
}

/// Resilient backpropagation without weight backtracking.
#[derive(Debug, Clone)]
pub struct Rprop {
    lr: f64,
    eta_minus: f64,
    eta_plus: f64,
    step_min: f64,
    step_max: f64,
    steps: Vec<f64>,
    prev: Vec<f64>,
}

impl Rprop {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            eta_minus: 0.5,
            eta_plus: 1.2,
            step_min: 1e-6,
            step_max: 50.0,
            steps: Vec::new(),
            prev: Vec::new(),
        }
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.steps
    }
}

impl Optimizer for Rprop {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), OptimizeError> {
        check_grad(params, grad)?;
        if self.steps.len() != params.len() {
            self.steps = vec![self.lr; params.len()];
            self.prev = vec![0.0; params.len()];
        }
        for i in 0..params.len() {
            let mut g = grad[i];
            let prod = g * self.prev[i];
            if prod > 0.0 {
                self.steps[i] = (self.steps[i] * self.eta_plus).min(self.step_max);
            } else if prod < 0.0 {
                self.steps[i] = (self.steps[i] * self.eta_minus).max(self.step_min);
                g = 0.0;
            }
            if g > 0.0 {
                params[i] -= self.steps[i];
            } else if g < 0.0 {
                params[i] += self.steps[i];
            }
            self.prev[i] = g;
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "rprop"
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), OptimizeError> {
        check_grad(params, grad)?;
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
            self.t = 0;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step_size = self.lr / bc1;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let denom = self.v[i].sqrt() / bc2.sqrt() + self.eps;
            params[i] -= step_size * self.m[i] / denom;
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "adam"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Rprop { lr: f64 },
    Adam { lr: f64 },
}

impl OptimizerKind {
    pub fn build(&self) -> Box<dyn Optimizer> {
        match *self {
            Self::Rprop { lr } => Box::new(Rprop::new(lr)),
            Self::Adam { lr } => Box::new(Adam::new(lr)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    /// Stop once the loss is at or below this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep a parameter snapshot every this many iterations; 0 disables.
    pub snapshot_stride: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
            snapshot_stride: 0,
        }
    }
}

/// Runs `forward` on a fresh tape per iteration, steps and projects until
/// the loss drops to `stop.tol` or `stop.max_iter` steps have been taken.
///
/// `forward` receives the parameter leaf and returns the scalar loss.
pub fn run_optimization<F, E>(
    mut forward: F,
    params: &mut BoundedParams,
    optimizer: &mut dyn Optimizer,
    stop: &StopCriteria,
) -> RunRecord
where
    F: FnMut(&mut Tape, VarId) -> Result<VarId, E>,
    E: Display,
{
    let start = Instant::now();
    let mut record = RunRecord::new(optimizer.name());
    let mut iter = 0;
    let reason = loop {
        if stop.snapshot_stride > 0 && iter % stop.snapshot_stride == 0 {
            record.snapshots.push((iter, params.values().to_vec()));
        }
        let mut tape = Tape::new();
        let p = params.register(&mut tape);
        let loss = match forward(&mut tape, p) {
            Ok(l) => l,
            Err(e) => break StopReason::Failed(format!("forward pass at iteration {iter}: {e}")),
        };
        let value = tape.scalar(loss);
        record.loss_history.push(value);
        if !value.is_finite() {
            break StopReason::Failed(format!("non-finite loss at iteration {iter}"));
        }
        if value <= stop.tol {
            break StopReason::Converged;
        }
        if iter == stop.max_iter {
            break StopReason::MaxIterations;
        }
        let grad = match tape.backward(loss) {
            Ok(g) => g.wrt(p),
            Err(e) => break StopReason::Failed(format!("backward pass at iteration {iter}: {e}")),
        };
        if let Err(e) = optimizer.step(params.values_mut(), &grad) {
            break StopReason::Failed(format!("optimizer step at iteration {iter}: {e}"));
        }
        params.project();
        iter += 1;
    };
    record.iterations = iter;
    record.stop_reason = reason;
    record.final_params = params.values().to_vec();
    record.wall_time = start.elapsed().as_secs_f64();
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::AdError;

    #[test]
    fn rprop_same_sign_grows_step() {
        let mut opt = Rprop::new(0.1);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert_eq!(p[0], -0.1);
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - (-0.1 - 0.12)).abs() < 1e-15);
    }

    #[test]
    fn rprop_sign_flip_skips_update() {
        let mut opt = Rprop::new(0.1);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        opt.step(&mut p, &[-1.0]).unwrap();
        assert_eq!(p[0], -0.1);
        assert_eq!(opt.step_sizes(), &[0.05]);
        // the stored gradient is zero, so the next step keeps its size
        opt.step(&mut p, &[-1.0]).unwrap();
        assert!((p[0] - (-0.05)).abs() < 1e-15);
        assert_eq!(opt.step_sizes(), &[0.05]);
    }

    #[test]
    fn rprop_zero_gradient() {
        let mut opt = Rprop::new(0.1);
        let mut p = [2.0];
        opt.step(&mut p, &[0.0]).unwrap();
        assert_eq!(p[0], 2.0);
        assert_eq!(opt.step_sizes(), &[0.1]);
    }

    #[test]
    fn rprop_rejects_non_finite_gradient() {
        let mut opt = Rprop::new(0.1);
        let mut p = [1.0, 2.0];
        opt.step(&mut p, &[1.0, 1.0]).unwrap();
        let before = (p, opt.step_sizes().to_vec());
        assert!(opt.step(&mut p, &[1.0, f64::NAN]).is_err());
        assert_eq!((p, opt.step_sizes().to_vec()), before);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut opt = Adam::new(0.01);
        let mut p = [1.0, 1.0];
        opt.step(&mut p, &[3.0, -0.2]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-8);
        assert!((p[1] - 1.01).abs() < 1e-7);
        assert_eq!(opt.timestep(), 1);
    }

    #[test]
    fn adam_two_steps_match_hand_trace() {
        let (lr, g) = (0.05, 0.7);
        let mut opt = Adam::new(lr);
        let mut p = [0.0];
        opt.step(&mut p, &[g]).unwrap();
        opt.step(&mut p, &[g]).unwrap();

        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() < 1e-12, "{} vs {x}", p[0]);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut opt = Adam::new(0.1);
        let mut p = [4.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0]).unwrap();
        }
        assert_eq!(p[0], 4.0);
    }

    #[test]
    fn projection() {
        let mut p = BoundedParams::new(vec![1.2, 0.5, 0.05])
            .with_bounds(Some(vec![0.0, 0.0, 0.1]), Some(vec![1.0, 1.0, 10.0]))
            .unwrap();
        assert_eq!(p.values(), &[1.0, 0.5, 0.1]);
        p.project();
        assert_eq!(p.values(), &[1.0, 0.5, 0.1]);
        assert!(BoundedParams::new(vec![0.0]).with_bounds(Some(vec![1.0]), Some(vec![0.0])).is_err());
        assert!(BoundedParams::new(vec![0.0]).with_bounds(Some(vec![f64::NEG_INFINITY]), None).is_err());
    }

    fn bowl(t: &mut Tape, p: VarId) -> Result<VarId, AdError> {
        let c = t.constant(vec![3.0]);
        let d = t.sub(p, c)?;
        let s = t.square(d)?;
        t.sum(s)
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut params = BoundedParams::new(vec![0.0]);
        let stop = StopCriteria {
            tol: 0.0,
            max_iter: 200,
            snapshot_stride: 50,
        };
        let rec = run_optimization(bowl, &mut params, &mut Rprop::new(0.1), &stop);
        assert!((params.values()[0] - 3.0).abs() <= 1e-3);
        assert_eq!(rec.loss_history.len(), rec.iterations + 1);
        assert_eq!(rec.stop_reason, StopReason::MaxIterations);
        assert_eq!(rec.snapshots.len(), 5);
    }

    #[test]
    fn tolerance_met_immediately() {
        let mut params = BoundedParams::new(vec![3.0]);
        let rec = run_optimization(bowl, &mut params, &mut Rprop::new(0.1), &StopCriteria::default());
        assert_eq!(rec.iterations, 0);
        assert_eq!(rec.loss_history, vec![0.0]);
        assert_eq!(rec.stop_reason, StopReason::Converged);
    }

    #[test]
    fn forward_failure_gives_partial_record() {
        let mut params = BoundedParams::new(vec![0.0]);
        let mut calls = 0;
        let rec = run_optimization(
            |t, p| {
                calls += 1;
                if calls == 3 {
                    return Err("solver blew up");
                }
                bowl(t, p).map_err(|_| "unreachable")
            },
            &mut params,
            &mut Rprop::new(0.1),
            &StopCriteria::default(),
        );
        assert!(rec.failed());
        assert_eq!(rec.loss_history.len(), 2);
        assert_eq!(rec.iterations, 2);
    }

    #[test]
    fn loop_respects_bounds() {
        let mut params = BoundedParams::new(vec![0.0]).with_bounds(None, Some(vec![2.0])).unwrap();
        let stop = StopCriteria {
            tol: 0.0,
            max_iter: 50,
            snapshot_stride: 0,
        };
        run_optimization(bowl, &mut params, &mut Rprop::new(0.5), &stop);
        assert_eq!(params.values(), &[2.0]);
    }
}
