//! Example 9: neural-network surrogate for the diffusion coefficient.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use adjoint_pde_core::autodiff::{Tape, VarId};
use adjoint_pde_core::fem::{KappaPoissonSystem, RectMesh};
use adjoint_pde_core::optimize::{OptimizerKind, RunRecord};
use adjoint_pde_core::surrogate::{
    node_points, physics_loss, train_data_driven, train_physics_informed, Mlp, KAPPA_MIN,
};

use crate::config::{ExperimentConfig, NnMode};
use crate::observations::Observations;
use crate::output::{write_field, write_text, PARAMS_FINAL};
use crate::problems::Report;
use crate::ExperimentError;

pub fn kappa_true(x: f64, y: f64) -> f64 {
    1.0 + 2.0 * x + 3.0 * y * y
}

pub fn solution_true(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

/// `f = -∇·(κ∇u)` for the true pair.
pub fn source(x: f64, y: f64) -> f64 {
    let (sx, cx) = (PI * x).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    2.0 * PI * PI * kappa_true(x, y) * sx * sy - 2.0 * PI * cx * sy - 6.0 * y * PI * sx * cy
}

/// Fine and coarse discretizations of Example 9.
pub struct NnProblem {
    pub fine: KappaPoissonSystem,
    pub coarse: RectMesh,
    pub layers: Vec<usize>,
    pub seed: u64,
    pub kappa_init_bias: f64,
    pub mode: NnMode,
    pub optimizer: OptimizerKind,
    pub iters: usize,
}

impl NnProblem {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        Ok(Self {
            fine: KappaPoissonSystem::new(RectMesh::unit_square(cfg.nx, cfg.nx)?, source)?,
            coarse: RectMesh::unit_square(cfg.coarse_nx, cfg.coarse_nx)?,
            layers: vec![2, cfg.hidden, 1],
            seed: cfg.seed,
            kappa_init_bias: cfg.kappa_init_bias,
            mode: cfg.mode,
            optimizer: cfg.optimizer_kind(),
            iters: cfg.max_iter,
        })
    }

    /// `[u on fine nodes, κ on coarse nodes, κ on fine nodes]`.
    pub fn observe(&self) -> Result<Observations, ExperimentError> {
        let kappa_fine = self.fine.mesh().interpolate(kappa_true);
        let u = self.fine.solve(&kappa_fine)?;
        Ok(Observations::new(vec![
            u,
            self.coarse.interpolate(kappa_true),
            kappa_fine,
        ]))
    }

    pub fn state_lengths(&self) -> Vec<usize> {
        vec![
            self.fine.mesh().n_nodes(),
            self.coarse.n_nodes(),
            self.fine.mesh().n_nodes(),
        ]
    }

    pub fn initial_network(&self) -> Result<Mlp, ExperimentError> {
        let mut mlp = Mlp::new(&self.layers, self.seed)?;
        mlp.set_output_bias(self.kappa_init_bias);
        Ok(mlp)
    }

    /// Trains according to the configured mode. Mixed training runs the
    /// coarse regression and the physics-informed stage for `iters` each and
    /// records both histories back to back.
    pub fn train(&self, mlp: &mut Mlp, obs: &Observations) -> RunRecord {
        let fine_points = node_points(self.fine.mesh().coords());
        match self.mode {
            NnMode::Data => train_data_driven(mlp, &fine_points, &obs.states[2], self.optimizer, self.iters),
            NnMode::Physics => train_physics_informed(mlp, &self.fine, &obs.states[0], self.optimizer, self.iters),
            NnMode::Mixed => {
                let coarse_points = node_points(self.coarse.coords());
                let pre = train_data_driven(mlp, &coarse_points, &obs.states[1], self.optimizer, self.iters);
                if pre.failed() {
                    return pre;
                }
                let tune = train_physics_informed(mlp, &self.fine, &obs.states[0], self.optimizer, self.iters);
                concat_records(pre, tune)
            }
        }
    }

    /// Physics-informed loss on the fine mesh.
    pub fn physics_loss(&self, mlp: &Mlp, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        Ok(physics_loss(mlp, tape, p, &self.fine, &obs.states[0])?)
    }

    /// Regression loss on the coarse samples.
    pub fn data_loss(&self, mlp: &Mlp, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let y = mlp.forward(tape, p, &node_points(self.coarse.coords()))?;
        let t = tape.constant(obs.states[1].clone());
        let d = tape.sub(t, y)?;
        Ok(tape.norm2(d)?)
    }

    /// `max(NN, κ_min)` on the fine nodes.
    pub fn kappa(&self, mlp: &Mlp) -> Result<Vec<f64>, ExperimentError> {
        let raw = mlp.predict(&node_points(self.fine.mesh().coords()))?;
        Ok(raw.into_iter().map(|k| k.max(KAPPA_MIN)).collect())
    }

    /// Largest nodal deviation of the surrogate from the true coefficient.
    pub fn kappa_max_error(&self, mlp: &Mlp) -> Result<f64, ExperimentError> {
        let truth = self.fine.mesh().interpolate(kappa_true);
        Ok(self
            .kappa(mlp)?
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn report(&self, mlp: &Mlp, obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let mesh = self.fine.mesh();
        let kappa = self.kappa(mlp)?;
        let truth = mesh.interpolate(kappa_true);
        let u = self.fine.solve(&kappa)?;
        let sq_err: Vec<f64> = kappa.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).collect();
        let u_err = u
            .iter()
            .zip(&obs.states[0])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        write_text(&dir.join(PARAMS_FINAL), &mlp.to_json())?;
        let mut metrics = BTreeMap::new();
        metrics.insert("kappa_max_error".to_string(), self.kappa_max_error(mlp)?);
        metrics.insert(
            "kappa_mean_squared_error".to_string(),
            sq_err.iter().sum::<f64>() / sq_err.len() as f64,
        );
        metrics.insert("solution_max_error".to_string(), u_err);
        metrics.insert("n_params".to_string(), mlp.n_params() as f64);
        Ok(Report {
            metrics,
            files: vec![
                write_field(dir, "kappa.csv", mesh, &kappa)?,
                write_field(dir, "kappa_true.csv", mesh, &truth)?,
                write_field(dir, "kappa_squared_error.csv", mesh, &sq_err)?,
                write_field(dir, "solution.csv", mesh, &u)?,
            ],
        })
    }
}

fn concat_records(mut pre: RunRecord, tune: RunRecord) -> RunRecord {
    pre.loss_history.extend(tune.loss_history);
    pre.iterations += tune.iterations;
    pre.wall_time += tune.wall_time;
    pre.final_params = tune.final_params;
    pre.stop_reason = tune.stop_reason;
    pre
}
