//! Fully connected sigmoid networks whose parameters live on the tape, used
//! as a surrogate for a spatially varying diffusion coefficient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Tape, VarId};
use crate::fem::KappaPoissonSystem;
use crate::optimize::{run_optimization, BoundedParams, OptimizerKind, RunRecord, StopCriteria};

/// Floor applied to the network output before it enters the PDE.
pub const KAPPA_MIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid layer sizes {0:?}: need at least two layers, all nonzero")]
    InvalidLayers(Vec<usize>),
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed checkpoint JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// `NN = T_L ∘ σ ∘ T_{L-1} ∘ … ∘ σ ∘ T_1` with `T_i(y) = W_i y + b_i`.
///
/// The parameters are one flat vector: for each layer, `W_i` in row-major
/// order (`n_i × n_{i-1}`) followed by `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    layers: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Weights uniform on `±1/√fan_in`, biases zero.
    pub fn new(layers: &[usize], seed: u64) -> Result<Self, SurrogateError> {
        Self::validate(layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(layers));
        for w in layers.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            layers: layers.to_vec(),
            params,
        })
    }

    pub fn from_params(layers: &[usize], params: Vec<f64>) -> Result<Self, SurrogateError> {
        Self::validate(layers)?;
        let expected = Self::param_count(layers);
        if params.len() != expected {
            return Err(SurrogateError::ParamCount {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            layers: layers.to_vec(),
            params,
        })
    }

    fn validate(layers: &[usize]) -> Result<(), SurrogateError> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(SurrogateError::InvalidLayers(layers.to_vec()));
        }
        Ok(())
    }

    /// `Σ_i (n_{i-1}·n_i + n_i)`.
    pub fn param_count(layers: &[usize]) -> usize {
        layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), SurrogateError> {
        if params.len() != self.params.len() {
            return Err(SurrogateError::ParamCount {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Sets every bias of the output layer.
    pub fn set_output_bias(&mut self, value: f64) {
        let n_out = *self.layers.last().expect("validated");
        let len = self.params.len();
        self.params[len - n_out..].iter_mut().for_each(|b| *b = value);
    }

    /// Network output at `points` (row-major, `layers[0]` coordinates per
    /// point), with the flat parameters given by the tape variable `params`.
    pub fn forward(&self, tape: &mut Tape, params: VarId, points: &[f64]) -> Result<VarId, AdError> {
        let mut h = tape.constant(points.to_vec());
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weight = tape.slice(params, offset, n_in * n_out)?;
            offset += n_in * n_out;
            let bias = tape.slice(params, offset, n_out)?;
            offset += n_out;
            h = tape.affine_batch(h, weight, bias, n_in, n_out)?;
            if l < last {
                h = tape.sigmoid(h)?;
            }
        }
        Ok(h)
    }

    /// Plain evaluation without gradients.
    pub fn predict(&self, points: &[f64]) -> Result<Vec<f64>, AdError> {
        let mut tape = Tape::new();
        let p = tape.constant(self.params.clone());
        let out = self.forward(&mut tape, p, points)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn to_json(&self) -> String {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0;
        for w in self.layers.windows(2) {
            weights.push(self.params[offset..offset + w[0] * w[1]].to_vec());
            offset += w[0] * w[1];
            biases.push(self.params[offset..offset + w[1]].to_vec());
            offset += w[1];
        }
        let ck = Checkpoint {
            layers: self.layers.clone(),
            weights,
            biases,
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        Self::validate(&ck.layers).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
        let n = ck.layers.len() - 1;
        if ck.weights.len() != n || ck.biases.len() != n {
            return Err(SurrogateError::Checkpoint(format!(
                "expected {n} weight and bias arrays, got {} and {}",
                ck.weights.len(),
                ck.biases.len()
            )));
        }
        let mut params = Vec::new();
        for (l, w) in ck.layers.windows(2).enumerate() {
            if w[0].checked_mul(w[1]) != Some(ck.weights[l].len()) || ck.biases[l].len() != w[1] {
                return Err(SurrogateError::Checkpoint(format!("layer {l} has the wrong shape")));
            }
            params.extend_from_slice(&ck.weights[l]);
            params.extend_from_slice(&ck.biases[l]);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::Checkpoint("non-finite parameter".into()));
        }
        Self::from_params(&ck.layers, params)
    }
}

/// Flattened node coordinates of a 2D system.
pub fn node_points(coords: &[[f64; 2]]) -> Vec<f64> {
    coords.iter().flat_map(|c| [c[0], c[1]]).collect()
}

fn train(
    mlp: &mut Mlp,
    optimizer: OptimizerKind,
    iters: usize,
    forward: impl FnMut(&mut Tape, VarId) -> Result<VarId, AdError>,
) -> RunRecord {
    let mut params = BoundedParams::new(mlp.params.clone());
    let stop = StopCriteria {
        tol: 0.0,
        max_iter: iters,
        snapshot_stride: 0,
    };
    let mut opt = optimizer.build();
    let record = run_optimization(forward, &mut params, opt.as_mut(), &stop);
    mlp.params.copy_from_slice(params.values());
    record
}

/// Regression `min ‖NN(points) - targets‖₂`.
pub fn train_data_driven(
    mlp: &mut Mlp,
    points: &[f64],
    targets: &[f64],
    optimizer: OptimizerKind,
    iters: usize,
) -> RunRecord {
    let net = mlp.clone();
    train(mlp, optimizer, iters, |tape, p| {
        let y = net.forward(tape, p, points)?;
        let t = tape.constant(targets.to_vec());
        let d = tape.sub(t, y)?;
        tape.norm2(d)
    })
}

/// Loss of the physics-informed mode: `‖u_true - u(max(NN, κ_min))‖₂`.
pub fn physics_loss(
    mlp: &Mlp,
    tape: &mut Tape,
    params: VarId,
    system: &KappaPoissonSystem,
    u_true: &[f64],
) -> Result<VarId, AdError> {
    let points = node_points(system.mesh().coords());
    let raw = mlp.forward(tape, params, &points)?;
    let kappa = tape.clamp_min(raw, KAPPA_MIN)?;
    let b = tape.constant(system.rhs().to_vec());
    let u = tape.linear_solve_param(system.family(), kappa, b)?;
    let t = tape.constant(u_true.to_vec());
    let d = tape.sub(t, u)?;
    tape.norm2(d)
}

/// Optimal control through the Poisson solve with the network as `κ`.
pub fn train_physics_informed(
    mlp: &mut Mlp,
    system: &KappaPoissonSystem,
    u_true: &[f64],
    optimizer: OptimizerKind,
    iters: usize,
) -> RunRecord {
    let net = mlp.clone();
    train(mlp, optimizer, iters, |tape, p| physics_loss(&net, tape, p, system, u_true))
}

/// Regression on coarse samples followed by physics-informed fine tuning.
pub fn train_mixed(
    mlp: &mut Mlp,
    coarse_points: &[f64],
    coarse_kappa: &[f64],
    fine: &KappaPoissonSystem,
    u_true: &[f64],
    optimizer: OptimizerKind,
    iters_each: usize,
) -> (RunRecord, RunRecord) {
    let pre = train_data_driven(mlp, coarse_points, coarse_kappa, optimizer, iters_each);
    let tune = train_physics_informed(mlp, fine, u_true, optimizer, iters_each);
    (pre, tune)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use crate::fem::RectMesh;
    use std::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        assert_eq!(Mlp::param_count(&[2, 20, 1]), 81);
        assert_eq!(Mlp::new(&[2, 20, 1], 0).unwrap().n_params(), 81);
        assert_eq!(Mlp::new(&[2, 1], 0).unwrap().n_params(), 3);
        assert!(Mlp::new(&[2], 0).is_err());
        assert!(Mlp::new(&[2, 0, 1], 0).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Mlp::new(&[2, 20, 1], 7).unwrap();
        assert_eq!(a, Mlp::new(&[2, 20, 1], 7).unwrap());
        assert_ne!(a, Mlp::new(&[2, 20, 1], 8).unwrap());
        let bound = 1.0 / 2f64.sqrt();
        assert!(a.params()[..40].iter().all(|w| w.abs() <= bound));
        assert!(a.params()[40..60].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::from_params(&[2, 20, 1], vec![0.0; 81]).unwrap();
        assert_eq!(m.predict(&[0.1, 0.2, 0.7, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_hidden_neuron_closed_form() {
        // W1 = [0.5, -1], b1 = 0.25, W2 = [2], b2 = -0.5
        let m = Mlp::from_params(&[2, 1, 1], vec![0.5, -1.0, 0.25, 2.0, -0.5]).unwrap();
        let out = m.predict(&[0.3, 0.8]).unwrap();
        let s = 1.0 / (1.0 + (-(0.5 * 0.3 - 0.8 + 0.25f64)).exp());
        assert!((out[0] - (2.0 * s - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Mlp::new(&[2, 5, 3, 1], 3).unwrap();
        let back = Mlp::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(Mlp::from_json(r#"{"layers":[2,1],"weights":[[1.0]],"biases":[[0.0]]}"#).is_err());
        assert!(Mlp::from_json("not json").is_err());
    }

    #[test]
    fn regression_gradient_check() {
        let m = Mlp::new(&[2, 20, 1], 1).unwrap();
        let pts: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).fract()).collect();
        let targets: Vec<f64> = (0..6).map(|i| 1.0 + i as f64 * 0.3).collect();
        let report = gradient_check(
            |t, p| {
                let y = m.forward(t, p, &pts)?;
                let c = t.constant(targets.clone());
                let d = t.sub(c, y)?;
                t.norm2(d)
            },
            m.params(),
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn constant_target_fit() {
        let mut m = Mlp::new(&[2, 20, 1], 0).unwrap();
        let pts: Vec<f64> = (0..25).flat_map(|i| [(i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0]).collect();
        let targets = vec![1.0; 25];
        let rec = train_data_driven(&mut m, &pts, &targets, OptimizerKind::Rprop { lr: 1e-2 }, 500);
        let err = m.predict(&pts).unwrap().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-3, "max error {err}, final loss {:?}", rec.final_loss());
    }

    #[test]
    fn zero_iterations_keep_weights() {
        let mut m = Mlp::new(&[2, 4, 1], 0).unwrap();
        let before = m.clone();
        let rec = train_data_driven(&mut m, &[0.0, 0.0], &[1.0], OptimizerKind::Adam { lr: 0.1 }, 0);
        assert_eq!(m, before);
        assert_eq!(rec.loss_history.len(), 1);
    }

    #[test]
    fn physics_loss_gradient_check() {
        let mesh = RectMesh::unit_square(4, 4).unwrap();
        let f = |x: f64, y: f64| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
        let sys = KappaPoissonSystem::new(mesh, f).unwrap();
        let u_true = sys.solve(&[1.5; 25]).unwrap();
        let mut m = Mlp::new(&[2, 20, 1], 2).unwrap();
        m.set_output_bias(1.0);
        let report = gradient_check(|t, p| physics_loss(&m, t, p, &sys, &u_true), m.params(), 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-5, "{report:?}");
    }
}
