use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use adjoint_pde::{
    gradcheck, gradcheck_config, observations_path, observe, run_example, ConfigError, ExampleId, ExperimentConfig,
    ExperimentError,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adjoint-pde", version, about = "PDE-constrained recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the unknown parameters of an example.
    Run(Common),
    /// Generate and persist the observations of an example.
    Observe(Common),
    /// Compare tape gradients with finite differences on a coarse mesh.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// One of ex1, ex2, ex3, ex4, ex5, ex6, ex9.
    example: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lr=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory, `runs/<example>` by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self, gradcheck: bool) -> Result<(ExperimentConfig, PathBuf), ExperimentError> {
        let example: ExampleId = self.example.parse()?;
        let text = match &self.config {
            Some(path) => Some(fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.clone(),
                message: e.to_string(),
            })?),
            None => None,
        };
        let base = if gradcheck {
            gradcheck_config(example)
        } else {
            ExperimentConfig::defaults(example)
        };
        let cfg = ExperimentConfig::load_onto(base, text.as_deref(), &self.set)?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(example.as_str()));
        Ok((cfg, out))
    }
}

fn execute(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.load(false)?;
            let outcome = run_example(&cfg, &out)?;
            if outcome.generated_observations {
                eprintln!("generated observations at {}", outcome.observations.display());
            }
            let r = &outcome.record;
            println!("example      {} ({})", cfg.example, cfg.example.description());
            println!("optimizer    {} lr={}", r.optimizer, cfg.lr);
            println!("iterations   {}", r.iterations);
            if let (Some(a), Some(b)) = (r.initial_loss(), r.final_loss()) {
                println!("loss         {a:.6e} -> {b:.6e}");
            }
            println!("stop         {:?}", r.stop_reason);
            println!("wall time    {:.3} s", r.wall_time);
            for (k, v) in &outcome.metrics {
                println!("{k:<24} {v:.6e}");
            }
            println!("output       {}", outcome.dir.display());
            Ok(if r.failed() { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Observe(args) => {
            let (cfg, out) = args.load(false)?;
            let path = observations_path(&cfg, &out);
            let obs = observe(&cfg, &path)?;
            let n: usize = obs.states.iter().map(Vec::len).sum();
            println!("wrote {} states ({n} values) to {}", obs.states.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck(args) => {
            let (cfg, _) = args.load(true)?;
            let mut ok = true;
            for r in gradcheck(&cfg)? {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status} {:<12} params={:<5} max_rel_error={:.3e} (tol {:.0e}, worst index {})",
                    r.name, r.n_params, r.max_rel_error, r.tolerance, r.worst_index
                );
                ok &= r.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
