//! Experiment driver: configuration, observations, recovery runs and
//! gradient checks for Examples 1–6 and 9.

pub mod config;
pub mod nn;
pub mod observations;
pub mod output;
pub mod problems;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use adjoint_pde_core::autodiff::{gradient_check, AdError};
use adjoint_pde_core::fd::FdError;
use adjoint_pde_core::fem::FemError;
use adjoint_pde_core::optimize::{run_optimization, OptimizeError, RunRecord, StopCriteria};
use adjoint_pde_core::sparse::SparseError;
use adjoint_pde_core::surrogate::SurrogateError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

pub use config::{ConfigError, ExampleId, ExperimentConfig, NnMode, StateNorm};
pub use observations::{ObservationError, Observations};
pub use problems::{problem, Problem, Report};

use output::{create, write_text, LOSS_HISTORY, OBSERVATIONS, PARAMS_FINAL, SUMMARY};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("observations: {0}")]
    Observations(#[from] ObservationError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("{0}")]
    Unsupported(String),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for invalid input, 3 for solver failures, 1
    /// otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Observations(_) | Self::Unsupported(_) => 2,
            Self::Io { .. } => 1,
            _ => 3,
        }
    }

    fn into_autodiff(self) -> AdError {
        match self {
            Self::Autodiff(e)
            | Self::Fd(FdError::Autodiff(e))
            | Self::Fem(FemError::Autodiff(e))
            | Self::Surrogate(SurrogateError::Autodiff(e)) => e,
            Self::Sparse(e) | Self::Fd(FdError::Sparse(e)) | Self::Fem(FemError::Sparse(e)) => AdError::Solver(e),
            _ => AdError::InvalidParameter {
                index: 0,
                value: f64::NAN,
                reason: "forward model failed",
            },
        }
    }
}

/// Result of a recovery or training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub metrics: BTreeMap<String, f64>,
    /// Files written into `dir`.
    pub files: Vec<String>,
    pub observations: PathBuf,
    /// The observations file did not exist and was generated by this run.
    pub generated_observations: bool,
}

/// Where a run reads its observations.
pub fn observations_path(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    cfg.observations.clone().unwrap_or_else(|| out.join(OBSERVATIONS))
}

fn state_lengths(cfg: &ExperimentConfig) -> Result<Vec<usize>, ExperimentError> {
    match cfg.example {
        ExampleId::Ex9 => Ok(nn::NnProblem::new(cfg)?.state_lengths()),
        _ => Ok(problem(cfg)?.state_lengths()),
    }
}

/// Forward solve with the true parameters plus the configured noise.
pub fn generate_observations(cfg: &ExperimentConfig) -> Result<Observations, ExperimentError> {
    let clean = match cfg.example {
        ExampleId::Ex9 => nn::NnProblem::new(cfg)?.observe()?,
        _ => problem(cfg)?.observe()?,
    };
    Ok(clean.with_noise(cfg.noise_sigma, cfg.seed)?)
}

/// Generates observations and writes them to `path`.
pub fn observe(cfg: &ExperimentConfig, path: &Path) -> Result<Observations, ExperimentError> {
    let obs = generate_observations(cfg)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
    }
    write_text(path, &obs.to_csv())?;
    Ok(obs)
}

/// Reads persisted observations, generating the file first if it is missing.
fn load_observations(
    cfg: &ExperimentConfig,
    path: &Path,
    lengths: &[usize],
) -> Result<(Observations, bool), ExperimentError> {
    let generated = !path.exists();
    if generated {
        observe(cfg, path)?;
    }
    let obs = Observations::read(path).map_err(|e| ExperimentError::io(path, e))??;
    obs.expect_shape(lengths)?;
    Ok((obs, generated))
}

/// Runs one experiment and writes its outputs into `out`.
pub fn run_example(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let obs_path = observations_path(cfg, out);
    let (obs, generated) = load_observations(cfg, &obs_path, &state_lengths(cfg)?)?;

    let (record, report) = match cfg.example {
        ExampleId::Ex9 => {
            let nn = nn::NnProblem::new(cfg)?;
            let mut mlp = nn.initial_network()?;
            let record = nn.train(&mut mlp, &obs);
            let report = if record.failed() {
                write_params(out, &record)?;
                Report::default()
            } else {
                nn.report(&mlp, &obs, out)?
            };
            (record, report)
        }
        _ => {
            let problem = problem(cfg)?;
            let mut params = problem.initial()?;
            let mut optimizer = cfg.optimizer_kind().build();
            let stop = StopCriteria {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                snapshot_stride: cfg.snapshot_stride,
            };
            let record = run_optimization(
                |tape, p| problem.loss(tape, p, &obs),
                &mut params,
                optimizer.as_mut(),
                &stop,
            );
            write_params(out, &record)?;
            let report = if record.failed() {
                Report::default()
            } else {
                problem.report(&record.final_params, &obs, out)?
            };
            (record, report)
        }
    };

    let path = out.join(LOSS_HISTORY);
    let mut w = create(&path)?;
    record
        .write_loss_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| ExperimentError::io(&path, e))?;

    let mut files = vec![LOSS_HISTORY.to_string(), PARAMS_FINAL.to_string()];
    files.extend(report.files);
    files.push(SUMMARY.to_string());
    let config: serde_json::Map<String, serde_json::Value> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let summary = json!({
        "example": cfg.example.as_str(),
        "description": cfg.example.description(),
        "config": config,
        "observations": obs_path.display().to_string(),
        "run": record.summary_json(),
        "metrics": report.metrics,
        "files": files,
    });
    write_text(
        &out.join(SUMMARY),
        &serde_json::to_string_pretty(&summary).expect("summary is serializable"),
    )?;

    Ok(RunOutcome {
        dir: out.to_path_buf(),
        record,
        metrics: report.metrics,
        files,
        observations: obs_path,
        generated_observations: generated,
    })
}

fn write_params(out: &Path, record: &RunRecord) -> Result<(), ExperimentError> {
    let value = json!({
        "params": record.final_params,
        "snapshots": record
            .snapshots
            .iter()
            .map(|(i, p)| json!({"iteration": i, "params": p}))
            .collect::<Vec<_>>(),
    });
    write_text(
        &out.join(PARAMS_FINAL),
        &serde_json::to_string_pretty(&value).expect("params are serializable"),
    )
}

/// One gradient comparison of the check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub n_params: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Coarse settings for the gradient-check suite.
pub fn gradcheck_config(example: ExampleId) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(example);
    c.seed = 1;
    match example {
        ExampleId::Ex1 | ExampleId::Ex2 => c.n_h = 10,
        ExampleId::Ex3 => {
            c.n_h = 6;
            c.n_k = 4;
        }
        ExampleId::Ex4 => {
            c.n_h = 10;
            c.n_k = 5;
        }
        ExampleId::Ex5 => c.nx_per_unit = 2,
        ExampleId::Ex6 => {
            c.nx = 3;
            c.n_k = 4;
            c.newton_tol = 1e-13;
        }
        ExampleId::Ex9 => {
            c.nx = 5;
            c.coarse_nx = 2;
            c.hidden = 4;
        }
    }
    c
}

/// Tape gradient against central differences at a seeded random point.
pub fn gradcheck(cfg: &ExperimentConfig) -> Result<Vec<GradCheckReport>, ExperimentError> {
    cfg.validate()?;
    let eps = 1e-6;
    let report = |name: String, tolerance: f64, n_params: usize, r: adjoint_pde_core::autodiff::GradCheck| {
        GradCheckReport {
            name,
            n_params,
            max_rel_error: r.max_rel_error,
            worst_index: r.worst_index,
            tolerance,
        }
    };
    match cfg.example {
        ExampleId::Ex9 => {
            let nn = nn::NnProblem::new(cfg)?;
            let obs = nn.observe()?;
            let mlp = nn.initial_network()?;
            let x0 = mlp.params().to_vec();
            let data = gradient_check(
                |t, p| nn.data_loss(&mlp, t, p, &obs).map_err(ExperimentError::into_autodiff),
                &x0,
                eps,
            )?;
            let physics = gradient_check(
                |t, p| nn.physics_loss(&mlp, t, p, &obs).map_err(ExperimentError::into_autodiff),
                &x0,
                eps,
            )?;
            Ok(vec![
                report("ex9/data".into(), 1e-5, x0.len(), data),
                report("ex9/physics".into(), 1e-5, x0.len(), physics),
            ])
        }
        ex => {
            let problem = problem(cfg)?;
            let obs = problem.observe()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let x0 = problem.random_point(&mut rng);
            let r = gradient_check(
                |t, p| problem.loss(t, p, &obs).map_err(ExperimentError::into_autodiff),
                &x0,
                eps,
            )?;
            let tolerance = if ex == ExampleId::Ex6 { 1e-5 } else { 1e-6 };
            Ok(vec![report(ex.to_string(), tolerance, x0.len(), r)])
        }
    }
}
