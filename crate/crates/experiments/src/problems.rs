//! Examples 1–6 as recovery problems: observations, initial guess, loss and
//! post-processing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use adjoint_pde_core::autodiff::{FactoredMatrix, NewtonConfig, Tape, VarId};
use adjoint_pde_core::fd::{
    heat_spacetime_rhs, poisson1d_solution, poisson1d_stiffness, BackwardEuler, Forcing, Grid1D, HeatSpaceTime,
    TimeGrid,
};
use adjoint_pde_core::fem::{lumped_mass, CrankNicolson, FinSystem, RectMesh};
use adjoint_pde_core::optimize::{tracking_loss, BoundedParams, LossSpec, Regularization};
use adjoint_pde_core::sparse::norm2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExampleId, ExperimentConfig, StateNorm};
use crate::observations::Observations;
use crate::output::{write_field, write_table};
use crate::ExperimentError;

/// True thermal fin parameters `(κ₀, κ₁, κ₂, κ₃, κ₄, Bi)`.
pub const FIN_MU_TRUE: [f64; 6] = [0.1, 8.37317, 6.57228, 0.466517, 1.88354, 0.01];
/// Reference values of the relative fin regularization.
pub const FIN_MU_REF: [f64; 6] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.1];
pub const FIN_LOWER: [f64; 6] = [0.1, 0.1, 0.1, 0.1, 0.1, 0.01];
pub const FIN_UPPER: [f64; 6] = [10.0, 10.0, 10.0, 10.0, 10.0, 1.0];

/// Metrics and written field files of a finished run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

pub trait Problem {
    fn id(&self) -> ExampleId;
    /// Noiseless observations from a forward solve with the true parameters.
    fn observe(&self) -> Result<Observations, ExperimentError>;
    fn state_lengths(&self) -> Vec<usize>;
    fn initial(&self) -> Result<BoundedParams, ExperimentError>;
    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError>;
    /// Random feasible point for gradient checks.
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError>;
}

/// Builds the problem of `cfg.example`; Example 9 is not a [`Problem`].
pub fn problem(cfg: &ExperimentConfig) -> Result<Box<dyn Problem>, ExperimentError> {
    Ok(match cfg.example {
        ExampleId::Ex1 => Box::new(PoissonScalar::new(cfg)?),
        ExampleId::Ex2 => Box::new(PoissonVector::new(cfg)?),
        ExampleId::Ex3 => Box::new(HeatSpaceTimeProblem::new(cfg)?),
        ExampleId::Ex4 => Box::new(HeatTimeStepping::new(cfg)?),
        ExampleId::Ex5 => Box::new(ThermalFin::new(cfg)?),
        ExampleId::Ex6 => Box::new(NonlinearHeat::new(cfg)?),
        ExampleId::Ex9 => {
            return Err(ExperimentError::Unsupported(
                "ex9 trains a network and has no single recovery problem".into(),
            ))
        }
    })
}

fn constants(tape: &mut Tape, obs: &Observations) -> Vec<VarId> {
    obs.states.iter().map(|s| tape.constant(s.clone())).collect()
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Poisson force `π² sin(πx)` on the interior nodes.
pub fn poisson_force(g: &Grid1D) -> Vec<f64> {
    g.nodes().iter().map(|x| PI * PI * (PI * x).sin()).collect()
}

/// Heat force `π² sin(πx) e^{-t}` stacked over `t_1, …, t_{n_k}`.
pub fn heat_force(g: &Grid1D, t: &TimeGrid) -> Vec<f64> {
    t.times()
        .iter()
        .flat_map(|&tj| g.nodes().into_iter().map(move |x| PI * PI * (PI * x).sin() * (-tj).exp()))
        .collect()
}

/// Heat initial condition `sin(πx)`.
pub fn heat_initial(g: &Grid1D) -> Vec<f64> {
    g.nodes().iter().map(|x| (PI * x).sin()).collect()
}

/// Source of the nonlinear heat problem with solution `e^{t-t²} sin(πx) sin(πy)`.
pub fn nonlinear_heat_source(x: f64, y: f64, t: f64) -> f64 {
    let s = (PI * x).sin() * (PI * y).sin();
    let et2 = (t * t).exp();
    (-2.0 * t * et2 + t.exp() * s + et2 + 2.0 * PI * PI * et2) * (-2.0 * t * t + t).exp() * s
}

pub fn nonlinear_heat_solution(x: f64, y: f64, t: f64) -> f64 {
    (t - t * t).exp() * (PI * x).sin() * (PI * y).sin()
}

/// Example 1: constant force of the 1D Poisson problem.
pub struct PoissonScalar {
    grid: Grid1D,
    k: Arc<FactoredMatrix>,
    f_true: f64,
    f_guess: f64,
}

impl PoissonScalar {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let grid = Grid1D::new(cfg.n_h)?;
        let k = Arc::new(FactoredMatrix::new(poisson1d_stiffness(&grid))?);
        Ok(Self {
            grid,
            k,
            f_true: cfg.f_true,
            f_guess: cfg.f_guess,
        })
    }
}

impl Problem for PoissonScalar {
    fn id(&self) -> ExampleId {
        ExampleId::Ex1
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        Ok(Observations::new(vec![poisson1d_solution(
            &self.grid,
            &Forcing::Constant(self.f_true),
        )?]))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.grid.n_dofs()]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![self.f_guess]))
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let f = tape.broadcast(p, self.grid.n_dofs())?;
        let u = tape.linear_solve(&self.k, f)?;
        let truth = constants(tape, obs);
        Ok(tracking_loss(tape, &[u], &truth, &LossSpec::euclidean(), None)?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.random_range(-3.0..3.0)]
    }

    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let u = self.k.lu().solve(&vec![params[0]; self.grid.n_dofs()])?;
        let rows: Vec<Vec<f64>> = self
            .grid
            .nodes()
            .into_iter()
            .zip(&obs.states[0])
            .zip(&u)
            .map(|((x, o), r)| vec![x, *o, *r])
            .collect();
        Ok(Report {
            metrics: metrics([("f_final", params[0]), ("f_abs_error", (params[0] - self.f_true).abs())]),
            files: vec![write_table(dir, "solution.csv", "x,observed,recovered", &rows)?],
        })
    }
}

/// Example 2: nodal force of the 1D Poisson problem.
pub struct PoissonVector {
    grid: Grid1D,
    k: Arc<FactoredMatrix>,
    alpha: f64,
}

impl PoissonVector {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let grid = Grid1D::new(cfg.n_h)?;
        let k = Arc::new(FactoredMatrix::new(poisson1d_stiffness(&grid))?);
        Ok(Self {
            grid,
            k,
            alpha: cfg.alpha,
        })
    }
}

impl Problem for PoissonVector {
    fn id(&self) -> ExampleId {
        ExampleId::Ex2
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        let f = Forcing::Nodal(poisson_force(&self.grid));
        Ok(Observations::new(vec![poisson1d_solution(&self.grid, &f)?]))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.grid.n_dofs()]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![0.0; self.grid.n_dofs()]))
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let u = tape.linear_solve(&self.k, p)?;
        let truth = constants(tape, obs);
        let spec = LossSpec::euclidean().with_alpha(self.alpha, Regularization::Norm);
        Ok(tracking_loss(tape, &[u], &truth, &spec, Some(p))?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.grid.n_dofs()).map(|_| rng.random_range(-5.0..5.0)).collect()
    }

    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let f_true = poisson_force(&self.grid);
        let u = self.k.lu().solve(params)?;
        let x = self.grid.nodes();
        let force: Vec<Vec<f64>> = (0..x.len()).map(|i| vec![x[i], f_true[i], params[i]]).collect();
        let sol: Vec<Vec<f64>> = (0..x.len()).map(|i| vec![x[i], obs.states[0][i], u[i]]).collect();
        Ok(Report {
            metrics: metrics([
                ("force_rel_error", rel_error(params, &f_true)),
                ("state_rel_error", rel_error(&u, &obs.states[0])),
            ]),
            files: vec![
                write_table(dir, "force.csv", "x,true,recovered", &force)?,
                write_table(dir, "solution.csv", "x,observed,recovered", &sol)?,
            ],
        })
    }
}

/// Example 3: stacked right-hand side of the space-time heat system.
pub struct HeatSpaceTimeProblem {
    solver: HeatSpaceTime,
    alpha: f64,
}

impl HeatSpaceTimeProblem {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let solver = HeatSpaceTime::new(Grid1D::new(cfg.n_h)?, TimeGrid::new(cfg.n_k, cfg.t_final)?)?;
        Ok(Self {
            solver,
            alpha: cfg.alpha,
        })
    }

    fn n(&self) -> usize {
        self.solver.grid().n_dofs()
    }

    fn n_k(&self) -> usize {
        self.solver.time().n_k()
    }

    /// Right-hand side generated by the true force and initial condition.
    pub fn true_rhs(&self) -> Result<Vec<f64>, ExperimentError> {
        let (g, t) = (self.solver.grid(), self.solver.time());
        Ok(heat_spacetime_rhs(g, t, &heat_force(g, t), &heat_initial(g))?)
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        let mut tape = Tape::new();
        let f = tape.constant(rhs.to_vec());
        let z = tape.constant(vec![0.0; self.n()]);
        let u = self.solver.solve(&mut tape, f, z)?;
        Ok(tape.value(u).to_vec())
    }
}

impl Problem for HeatSpaceTimeProblem {
    fn id(&self) -> ExampleId {
        ExampleId::Ex3
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        let u = self.solve(&self.true_rhs()?)?;
        Ok(Observations::new(u.chunks(self.n()).map(<[f64]>::to_vec).collect()))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.n(); self.n_k()]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![0.0; self.n() * self.n_k()]))
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let zero = tape.constant(vec![0.0; self.n()]);
        let u = self.solver.solve(tape, p, zero)?;
        let truth = tape.constant(obs.states.concat());
        let spec = LossSpec::euclidean().with_alpha(self.alpha, Regularization::Norm);
        Ok(tracking_loss(tape, &[u], &[truth], &spec, Some(p))?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n() * self.n_k()).map(|_| rng.random_range(-5.0..5.0)).collect()
    }

    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let (n, g) = (self.n(), self.solver.grid());
        let rhs_true = self.true_rhs()?;
        let u = self.solve(params)?;
        let observed = obs.states.concat();
        let x = g.nodes();
        let times = self.solver.time().times();
        let mut rows = Vec::with_capacity(params.len());
        for j in 0..self.n_k() {
            for i in 0..n {
                rows.push(vec![times[j], x[i], rhs_true[j * n + i], params[j * n + i]]);
            }
        }
        let centre = (n - 1) / 2;
        let trace: Vec<Vec<f64>> = (0..self.n_k())
            .map(|j| vec![times[j], observed[j * n + centre], u[j * n + centre]])
            .collect();
        Ok(Report {
            metrics: metrics([
                ("rhs_rel_error", rel_error(params, &rhs_true)),
                ("state_rel_error", rel_error(&u, &observed)),
                ("centre_x", x[centre]),
            ]),
            files: vec![
                write_table(dir, "rhs.csv", "t,x,true,recovered", &rows)?,
                write_table(dir, "solution_centre.csv", "t,observed,recovered", &trace)?,
            ],
        })
    }
}

/// Example 4: initial condition of the time-stepped heat equation.
pub struct HeatTimeStepping {
    solver: BackwardEuler,
    forces: Vec<Vec<f64>>,
    alpha: f64,
}

impl HeatTimeStepping {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let (g, t) = (Grid1D::new(cfg.n_h)?, TimeGrid::new(cfg.n_k, cfg.t_final)?);
        let forces = heat_force(&g, &t).chunks(g.n_dofs()).map(<[f64]>::to_vec).collect();
        Ok(Self {
            solver: BackwardEuler::new(g, t)?,
            forces,
            alpha: cfg.alpha,
        })
    }

    fn n(&self) -> usize {
        self.solver.grid().n_dofs()
    }

    /// States `U⁰, U¹, …, U^{n_k}` on the tape.
    fn states(&self, tape: &mut Tape, u0: VarId) -> Result<Vec<VarId>, ExperimentError> {
        let forces: Vec<VarId> = self.forces.iter().map(|f| tape.constant(f.clone())).collect();
        let mut states = vec![u0];
        states.extend(self.solver.chain(tape, Some(&forces), u0)?);
        Ok(states)
    }
}

impl Problem for HeatTimeStepping {
    fn id(&self) -> ExampleId {
        ExampleId::Ex4
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        let mut tape = Tape::new();
        let u0 = tape.constant(heat_initial(self.solver.grid()));
        let states = self.states(&mut tape, u0)?;
        Ok(Observations::new(states.iter().map(|&s| tape.value(s).to_vec()).collect()))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.n(); self.solver.time().n_k() + 1]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![0.0; self.n()]))
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let guess = self.states(tape, p)?;
        let truth = constants(tape, obs);
        let spec = LossSpec::euclidean()
            .averaged()
            .with_alpha(self.alpha, Regularization::Norm);
        Ok(tracking_loss(tape, &guess, &truth, &spec, Some(p))?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let truth = heat_initial(self.solver.grid());
        let x = self.solver.grid().nodes();
        let rows: Vec<Vec<f64>> = (0..x.len()).map(|i| vec![x[i], truth[i], params[i]]).collect();
        let mut tape = Tape::new();
        let u0 = tape.constant(params.to_vec());
        let states = self.states(&mut tape, u0)?;
        let last = tape.value(*states.last().expect("at least U⁰")).to_vec();
        Ok(Report {
            metrics: metrics([
                ("u0_rel_error", rel_error(params, &truth)),
                (
                    "final_state_rel_error",
                    rel_error(&last, obs.states.last().expect("validated shape")),
                ),
            ]),
            files: vec![write_table(dir, "initial_condition.csv", "x,true,recovered", &rows)?],
        })
    }
}

/// Example 5: conductivities and Biot number of the thermal fin.
pub struct ThermalFin {
    system: FinSystem,
    alpha: f64,
}

impl ThermalFin {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        Ok(Self {
            system: FinSystem::new(RectMesh::fin(cfg.nx_per_unit)?)?,
            alpha: cfg.alpha,
        })
    }

    pub fn system(&self) -> &FinSystem {
        &self.system
    }
}

impl Problem for ThermalFin {
    fn id(&self) -> ExampleId {
        ExampleId::Ex5
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        Ok(Observations::new(vec![self.system.solve(&FIN_MU_TRUE)?]))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.system.n_dofs()]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![0.5; 6]).with_bounds(Some(FIN_LOWER.to_vec()), Some(FIN_UPPER.to_vec()))?)
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let b = tape.constant(self.system.rhs().to_vec());
        let u = tape.linear_solve_param(self.system.family(), p, b)?;
        let truth = constants(tape, obs);
        let spec = LossSpec::euclidean().with_alpha(self.alpha, Regularization::RelativeTo(FIN_MU_REF.to_vec()));
        Ok(tracking_loss(tape, &[u], &truth, &spec, Some(p))?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        FIN_LOWER
            .iter()
            .zip(&FIN_UPPER)
            .map(|(&lo, &hi)| rng.random_range(lo + 0.1 * (hi - lo)..hi - 0.1 * (hi - lo)))
            .collect()
    }

    fn report(&self, params: &[f64], obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let u = self.system.solve(params)?;
        let mesh = self.system.mesh();
        let names = ["kappa0", "kappa1", "kappa2", "kappa3", "kappa4", "biot"];
        let mut m = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            m.insert(name.to_string(), params[i]);
            m.insert(
                format!("{name}_rel_error"),
                (params[i] - FIN_MU_TRUE[i]).abs() / FIN_MU_TRUE[i],
            );
        }
        m.insert("n_dofs".into(), self.system.n_dofs() as f64);
        m.insert("state_rel_error".into(), rel_error(&u, &obs.states[0]));
        Ok(Report {
            metrics: m,
            files: vec![
                write_field(dir, "solution.csv", mesh, &u)?,
                write_field(dir, "solution_observed.csv", mesh, &obs.states[0])?,
            ],
        })
    }
}

/// Example 6: initial condition of the nonlinear heat equation.
pub struct NonlinearHeat {
    solver: CrankNicolson,
    norm_weights: Option<Vec<f64>>,
    alpha: f64,
}

impl NonlinearHeat {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let mesh = RectMesh::unit_square(cfg.nx, cfg.nx)?;
        let norm_weights = match cfg.state_norm {
            StateNorm::L2 => Some(lumped_mass(&mesh)),
            StateNorm::Euclidean => None,
        };
        let newton = NewtonConfig {
            tol: cfg.newton_tol,
            max_iter: cfg.newton_max_iter,
            ..NewtonConfig::default()
        };
        let solver = CrankNicolson::new(
            mesh,
            TimeGrid::new(cfg.n_k, cfg.t_final)?,
            nonlinear_heat_source,
            newton,
        )?;
        Ok(Self {
            solver,
            norm_weights,
            alpha: cfg.alpha,
        })
    }

    pub fn true_initial(&self) -> Vec<f64> {
        self.solver.mesh().interpolate(|x, y| nonlinear_heat_solution(x, y, 0.0))
    }

    /// All states `u_0, …, u_{n_k}` from a given initial condition.
    pub fn simulate(&self, u0: &[f64]) -> Result<Vec<Vec<f64>>, ExperimentError> {
        let mut tape = Tape::new();
        let p = tape.constant(u0.to_vec());
        let states = self.solver.chain(&mut tape, p)?;
        let mut out = vec![u0.to_vec()];
        out.extend(states.iter().map(|&s| tape.value(s).to_vec()));
        Ok(out)
    }

    fn spec(&self) -> LossSpec {
        let spec = LossSpec::euclidean().with_alpha(self.alpha, Regularization::Norm);
        match &self.norm_weights {
            Some(w) => spec.weighted(w.clone()),
            None => spec,
        }
    }
}

impl Problem for NonlinearHeat {
    fn id(&self) -> ExampleId {
        ExampleId::Ex6
    }

    fn observe(&self) -> Result<Observations, ExperimentError> {
        let u0 = self.true_initial();
        let last = self.simulate(&u0)?.pop().expect("at least u_0");
        Ok(Observations::new(vec![u0, last]))
    }

    fn state_lengths(&self) -> Vec<usize> {
        vec![self.solver.mesh().n_nodes(); 2]
    }

    fn initial(&self) -> Result<BoundedParams, ExperimentError> {
        Ok(BoundedParams::new(vec![0.0; self.solver.mesh().n_nodes()]))
    }

    fn loss(&self, tape: &mut Tape, p: VarId, obs: &Observations) -> Result<VarId, ExperimentError> {
        let states = self.solver.chain(tape, p)?;
        let last = *states.last().expect("n_k ≥ 1");
        let truth = constants(tape, obs);
        Ok(tracking_loss(tape, &[p, last], &truth, &self.spec(), Some(p))?)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.solver.mesh().n_nodes())
            .map(|_| rng.random_range(0.0..1.0))
            .collect()
    }

    fn report(&self, params: &[f64], _obs: &Observations, dir: &Path) -> Result<Report, ExperimentError> {
        let mesh = self.solver.mesh();
        let truth = self.true_initial();
        let boundary = self.solver.operators().dirichlet();
        let interior_error = params
            .iter()
            .zip(&truth)
            .zip(boundary)
            .filter(|(_, &b)| !b)
            .map(|((p, t), _)| (p - t).abs())
            .fold(0.0, f64::max);
        let states = self.simulate(params)?;
        let centre = mesh
            .find_node(0.5, 0.5)
            .unwrap_or_else(|| nearest_node(mesh, 0.5, 0.5));
        let [cx, cy] = mesh.coords()[centre];
        let mut times = vec![0.0];
        times.extend(self.solver.time().times());
        let trace: Vec<Vec<f64>> = times
            .into_iter()
            .zip(&states)
            .map(|(t, s)| vec![t, nonlinear_heat_solution(cx, cy, t), s[centre]])
            .collect();
        Ok(Report {
            metrics: metrics([
                ("u0_max_error_interior", interior_error),
                ("u0_max_error", max_abs_diff(params, &truth)),
            ]),
            files: vec![
                write_field(dir, "initial_condition.csv", mesh, params)?,
                write_field(dir, "initial_condition_true.csv", mesh, &truth)?,
                write_table(dir, "solution_centre.csv", "t,exact,recovered", &trace)?,
            ],
        })
    }
}

fn nearest_node(mesh: &RectMesh, x: f64, y: f64) -> usize {
    let d = |c: &[f64; 2]| (c[0] - x).powi(2) + (c[1] - y).powi(2);
    (0..mesh.n_nodes())
        .min_by(|&a, &b| d(&mesh.coords()[a]).total_cmp(&d(&mesh.coords()[b])))
        .expect("mesh has nodes")
}
