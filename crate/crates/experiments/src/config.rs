//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # Example 1 with a slower optimizer
//! lr = 0.05
//! max_iter = 200
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Command-line `--set key=value` overrides use the same syntax.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use adjoint_pde_core::optimize::OptimizerKind;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("unknown example `{0}` (expected one of ex1, ex2, ex3, ex4, ex5, ex6, ex9)")]
    UnknownExample(String),
    #[error("cannot read config file {path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
    Ex9,
}

impl ExampleId {
    pub const ALL: [ExampleId; 7] = [
        Self::Ex1,
        Self::Ex2,
        Self::Ex3,
        Self::Ex4,
        Self::Ex5,
        Self::Ex6,
        Self::Ex9,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2 => "ex2",
            Self::Ex3 => "ex3",
            Self::Ex4 => "ex4",
            Self::Ex5 => "ex5",
            Self::Ex6 => "ex6",
            Self::Ex9 => "ex9",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Self::Ex1 => "1D Poisson, scalar force",
            Self::Ex2 => "1D Poisson, vector force",
            Self::Ex3 => "1+1D heat, space-time right-hand side",
            Self::Ex4 => "1+1D heat, time-stepping initial condition",
            Self::Ex5 => "2D thermal fin conductivities",
            Self::Ex6 => "2+1D nonlinear heat initial condition",
            Self::Ex9 => "2D Poisson diffusion coefficient with a neural network",
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownExample(s.to_string()))
    }
}

/// Training mode of the neural-network example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnMode {
    Data,
    Physics,
    Mixed,
}

impl NnMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Data => "data",
            Self::Physics => "physics",
            Self::Mixed => "mixed",
        }
    }
}

/// Norm used for state mismatches in the nonlinear heat example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateNorm {
    /// Discrete L² norm with lumped mass weights.
    L2,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: ExampleId,
    pub n_h: usize,
    pub n_k: usize,
    pub t_final: f64,
    /// Elements per direction on the unit square.
    pub nx: usize,
    /// Fin mesh resolution.
    pub nx_per_unit: usize,
    pub optimizer: String,
    pub lr: f64,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub snapshot_stride: usize,
    pub observations: Option<PathBuf>,
    pub f_true: f64,
    pub f_guess: f64,
    pub mode: NnMode,
    pub hidden: usize,
    pub coarse_nx: usize,
    pub kappa_init_bias: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub state_norm: StateNorm,
}

pub const KEYS: &[&str] = &[
    "n_h",
    "n_k",
    "t_final",
    "nx",
    "nx_per_unit",
    "optimizer",
    "lr",
    "alpha",
    "max_iter",
    "tol",
    "seed",
    "noise_sigma",
    "snapshot_stride",
    "observations",
    "f_true",
    "f_guess",
    "mode",
    "hidden",
    "coarse_nx",
    "kappa_init_bias",
    "newton_tol",
    "newton_max_iter",
    "state_norm",
];

impl ExperimentConfig {
    /// Settings of the published experiment, with documented fill-ins where
    /// the original leaves them open.
    pub fn defaults(example: ExampleId) -> Self {
        let mut c = Self {
            example,
            n_h: 50,
            n_k: 50,
            t_final: 1.0,
            nx: 10,
            nx_per_unit: 17,
            optimizer: "rprop".into(),
            lr: 0.1,
            alpha: 0.0,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            noise_sigma: 0.0,
            snapshot_stride: 0,
            observations: None,
            f_true: -1.0,
            f_guess: 2.0,
            mode: NnMode::Mixed,
            hidden: 20,
            coarse_nx: 4,
            kappa_init_bias: 1.0,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            state_norm: StateNorm::L2,
        };
        match example {
            ExampleId::Ex1 => c.max_iter = 110,
            ExampleId::Ex2 => {
                c.alpha = 0.099;
                c.max_iter = 1000;
            }
            ExampleId::Ex3 => {
                c.n_h = 150;
                c.alpha = 0.01;
                c.max_iter = 1000;
            }
            ExampleId::Ex4 => {
                c.n_h = 150;
                c.alpha = 0.1;
                c.max_iter = 500;
            }
            ExampleId::Ex5 => {
                c.lr = 0.01;
                c.alpha = 0.1;
            }
            ExampleId::Ex6 => {
                c.n_k = 100;
                c.alpha = 0.1;
            }
            ExampleId::Ex9 => {
                c.nx = 40;
                c.optimizer = "adam".into();
                c.lr = 1e-2;
                c.max_iter = 300;
                c.tol = 0.0;
            }
        }
        c
    }

    /// Defaults, then the file contents, then the overrides.
    pub fn load(example: ExampleId, text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        Self::load_onto(Self::defaults(example), text, overrides)
    }

    /// `base`, then the file contents, then the overrides.
    pub fn load_onto(base: Self, text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut c = base;
        if let Some(text) = text {
            for (key, value) in parse_pairs(text)? {
                c.set(&key, &value)?;
            }
        }
        for o in overrides {
            let (key, value) = parse_override(o)?;
            c.set(&key, &value)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "n_h" => self.n_h = parse(key, value)?,
            "n_k" => self.n_k = parse(key, value)?,
            "t_final" => self.t_final = parse(key, value)?,
            "nx" => self.nx = parse(key, value)?,
            "nx_per_unit" => self.nx_per_unit = parse(key, value)?,
            "optimizer" => self.optimizer = value.to_string(),
            "lr" => self.lr = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "snapshot_stride" => self.snapshot_stride = parse(key, value)?,
            "observations" => self.observations = Some(PathBuf::from(value)),
            "f_true" => self.f_true = parse(key, value)?,
            "f_guess" => self.f_guess = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "data" => NnMode::Data,
                    "physics" => NnMode::Physics,
                    "mixed" => NnMode::Mixed,
                    _ => return Err(bad(key, value, "one of data, physics, mixed")),
                }
            }
            "hidden" => self.hidden = parse(key, value)?,
            "coarse_nx" => self.coarse_nx = parse(key, value)?,
            "kappa_init_bias" => self.kappa_init_bias = parse(key, value)?,
            "newton_tol" => self.newton_tol = parse(key, value)?,
            "newton_max_iter" => self.newton_max_iter = parse(key, value)?,
            "state_norm" => {
                self.state_norm = match value {
                    "l2" => StateNorm::L2,
                    "euclidean" => StateNorm::Euclidean,
                    _ => return Err(bad(key, value, "one of l2, euclidean")),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_string(),
            })
        };
        if self.n_h < 2 {
            return invalid("n_h", "must be at least 2");
        }
        for (key, v) in [
            ("n_k", self.n_k),
            ("nx", self.nx),
            ("nx_per_unit", self.nx_per_unit),
            ("hidden", self.hidden),
            ("coarse_nx", self.coarse_nx),
            ("newton_max_iter", self.newton_max_iter),
        ] {
            if v == 0 {
                return invalid(key, "must be positive");
            }
        }
        for (key, v) in [("t_final", self.t_final), ("lr", self.lr), ("newton_tol", self.newton_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(key, "must be a positive number");
            }
        }
        for (key, v) in [("alpha", self.alpha), ("tol", self.tol), ("noise_sigma", self.noise_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(key, "must be a non-negative number");
            }
        }
        for (key, v) in [
            ("f_true", self.f_true),
            ("f_guess", self.f_guess),
            ("kappa_init_bias", self.kappa_init_bias),
        ] {
            if !v.is_finite() {
                return invalid(key, "must be finite");
            }
        }
        if !matches!(self.optimizer.as_str(), "rprop" | "adam") {
            return invalid("optimizer", "must be rprop or adam");
        }
        Ok(())
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer.as_str() {
            "adam" => OptimizerKind::Adam { lr: self.lr },
            _ => OptimizerKind::Rprop { lr: self.lr },
        }
    }

    /// `(key, value)` pairs in the order of [`KEYS`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let norm = match self.state_norm {
            StateNorm::L2 => "l2",
            StateNorm::Euclidean => "euclidean",
        };
        vec![
            ("n_h", self.n_h.to_string()),
            ("n_k", self.n_k.to_string()),
            ("t_final", self.t_final.to_string()),
            ("nx", self.nx.to_string()),
            ("nx_per_unit", self.nx_per_unit.to_string()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.to_string()),
            ("alpha", self.alpha.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("tol", self.tol.to_string()),
            ("seed", self.seed.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("snapshot_stride", self.snapshot_stride.to_string()),
            (
                "observations",
                self.observations
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("f_true", self.f_true.to_string()),
            ("f_guess", self.f_guess.to_string()),
            ("mode", self.mode.as_str().to_string()),
            ("hidden", self.hidden.to_string()),
            ("coarse_nx", self.coarse_nx.to_string()),
            ("kappa_init_bias", self.kappa_init_bias.to_string()),
            ("newton_tol", self.newton_tol.to_string()),
            ("newton_max_iter", self.newton_max_iter.to_string()),
            ("state_norm", norm.to_string()),
        ]
    }

    /// Config file text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {} ({})\n", self.example, self.example.description());
        for (k, v) in self.entries() {
            if k == "observations" && v.is_empty() {
                continue;
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn bad(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, std::any::type_name::<T>()))
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() || k.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses one `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let mut pairs = parse_pairs(s)?;
    if pairs.len() != 1 || s.contains('\n') {
        return Err(ConfigError::Syntax {
            line: 1,
            text: s.to_string(),
        });
    }
    Ok(pairs.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# header\n\nlr = 0.05  # slower\nmax_iter=7\n";
        let c = ExperimentConfig::load(ExampleId::Ex1, Some(text), &[]).unwrap();
        assert_eq!(c.lr, 0.05);
        assert_eq!(c.max_iter, 7);
    }

    #[test]
    fn overrides_win() {
        let c = ExperimentConfig::load(ExampleId::Ex1, Some("lr = 0.05"), &["lr=0.2".into()]).unwrap();
        assert_eq!(c.lr, 0.2);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::load(ExampleId::Ex1, Some("learning_rate = 1"), &[]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("learning_rate".into()));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_pairs("lr 0.1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_pairs("a = 1\n= 3"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(parse_override("lr").is_err());
        assert!(parse_override("").is_err());
    }

    #[test]
    fn validation() {
        let bad = |o: &str| ExperimentConfig::load(ExampleId::Ex2, None, &[o.to_string()]).unwrap_err();
        assert!(matches!(bad("n_h=1"), ConfigError::Invalid { key: "n_h", .. }));
        assert!(matches!(bad("lr=0"), ConfigError::Invalid { key: "lr", .. }));
        assert!(matches!(bad("alpha=-1"), ConfigError::Invalid { key: "alpha", .. }));
        assert!(matches!(bad("optimizer=sgd"), ConfigError::Invalid { .. }));
        assert!(matches!(bad("mode=other"), ConfigError::BadValue { .. }));
        assert!(matches!(bad("n_k=abc"), ConfigError::BadValue { .. }));
        assert!(matches!(bad("lr=NaN"), ConfigError::Invalid { .. }));
    }

    #[test]
    fn text_round_trip() {
        for ex in ExampleId::ALL {
            let mut c = ExperimentConfig::defaults(ex);
            c.lr = 0.123456789;
            c.observations = Some("obs.csv".into());
            let back = ExperimentConfig::load(ex, Some(&c.to_text()), &[]).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn example_ids() {
        assert_eq!("ex4".parse::<ExampleId>().unwrap(), ExampleId::Ex4);
        assert!("ex7".parse::<ExampleId>().is_err());
    }
}
