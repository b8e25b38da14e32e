//! Experiment configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use mimicry_core::mimic::Route;
use mimicry_core::reference::VLaw;
use mimicry_core::subordinator::{calibrate_to, FreeParam, JumpFamily};
use mimicry_core::{ReferenceProcess, SubordinatorSpec, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_paths: usize,
    #[serde(default = "default_route")]
    pub route: Route,
    #[serde(default)]
    pub transform: Transform,
    pub reference: ReferenceConfig,
    pub subordinator: SubordinatorConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub tests: Vec<TestConfig>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_route() -> Route {
    Route::Timechange
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceConfig {
    GaussianMartingale {
        k: f64,
    },
    SquaredBesselMartingale {
        delta: f64,
    },
    StableMartingale {
        alpha: f64,
        #[serde(default)]
        skew: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    SignFlip {
        kappa: f64,
        #[serde(default)]
        v: VLaw,
    },
}

fn one() -> f64 {
    1.0
}

impl ReferenceConfig {
    pub fn build(&self) -> Result<ReferenceProcess, CliError> {
        Ok(match *self {
            ReferenceConfig::GaussianMartingale { k } => ReferenceProcess::gaussian(k)?,
            ReferenceConfig::SquaredBesselMartingale { delta } => ReferenceProcess::squared_bessel(delta)?,
            ReferenceConfig::StableMartingale { alpha, skew, scale } => ReferenceProcess::stable(alpha, skew, scale)?,
            ReferenceConfig::SignFlip { kappa, v } => ReferenceProcess::sign_flip(kappa, v)?,
        })
    }
}

/// Jump family with starting parameters; the free parameter of `calibrate` may be
/// omitted (it starts at 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubordinatorConfig {
    pub family: String,
    #[serde(default)]
    pub beta: f64,
    pub rate: Option<f64>,
    pub theta: Option<f64>,
    pub shape: Option<f64>,
    pub index: Option<f64>,
    pub scale: Option<f64>,
    pub calibrate: Option<CalibrationConfig>,
}

/// Solve `ψ(lambda) = target` for `free`. `lambda` defaults to the reference's κ
/// and `target` to `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub free: String,
    pub lambda: Option<f64>,
    pub target: Option<f64>,
}

impl SubordinatorConfig {
    fn template(&self, free: Option<FreeParam>) -> Result<SubordinatorSpec, CliError> {
        let get = |name: &str, value: Option<f64>, param: FreeParam| -> Result<f64, CliError> {
            match (value, free) {
                (Some(v), _) => Ok(v),
                (None, Some(p)) if p == param => Ok(1.0),
                (None, _) => Err(CliError::Config(format!("subordinator family `{}` needs `{name}`", self.family))),
            }
        };
        let jumps = match self.family.as_str() {
            "drift-only" => JumpFamily::DriftOnly,
            "poisson" => JumpFamily::Poisson { rate: get("rate", self.rate, FreeParam::Rate)? },
            "compound-poisson-exponential" => JumpFamily::CompoundPoissonExponential {
                rate: get("rate", self.rate, FreeParam::Rate)?,
                theta: get("theta", self.theta, FreeParam::Theta)?,
            },
            "gamma" => JumpFamily::Gamma {
                shape: get("shape", self.shape, FreeParam::Rate)?,
                theta: get("theta", self.theta, FreeParam::Theta)?,
            },
            "stable-subordinator" => JumpFamily::StableSubordinator {
                index: self
                    .index
                    .ok_or_else(|| CliError::Config("stable-subordinator needs `index`".into()))?,
                scale: get("scale", self.scale, FreeParam::Rate)?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown subordinator family `{other}` (expected drift-only, poisson, compound-poisson-exponential, gamma, stable-subordinator)"
                )))
            }
        };
        Ok(SubordinatorSpec::new(self.beta, jumps)?)
    }

    pub fn build(&self, kappa: f64) -> Result<SubordinatorSpec, CliError> {
        match &self.calibrate {
            None => self.template(None),
            Some(c) => {
                let free: FreeParam = c.free.parse()?;
                let lambda = c.lambda.unwrap_or(kappa);
                let target = c.target.unwrap_or(lambda);
                Ok(calibrate_to(&self.template(Some(free))?, lambda, target, free)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
    pub log_anchor: Option<f64>,
    /// Explicit observation times; replaces `t_min`/`t_max`/`points`.
    pub times: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid, CliError> {
        let grid = match (&self.times, self.t_min, self.t_max, self.points) {
            (Some(times), None, None, None) => TimeGrid::new(times.clone(), None)?,
            (None, Some(lo), Some(hi), Some(n)) => match self.spacing {
                Spacing::Geometric => TimeGrid::geometric(lo, hi, n)?,
                Spacing::Linear => TimeGrid::linear(lo, hi, n)?,
            },
            _ => return Err(CliError::Config("grid needs either `times` or all of `t_min`, `t_max`, `points`".into())),
        };
        match self.log_anchor {
            Some(a) => Ok(grid.with_anchor(a)?),
            None => Ok(grid),
        }
    }
}

/// Entrywise transform applied to the simulated ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Transform {
    #[default]
    None,
    /// `H_n(X_t, t)`.
    Hermite { degree: u32 },
    /// `exp(X_t - t/2)`.
    Exponential,
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestConfig {
    /// Per-time KS against reference marginals (Bonferroni over `times`).
    Marginal {
        #[serde(default = "default_alpha")]
        alpha: f64,
        times: Vec<f64>,
    },
    /// Regression of `X_t` on `X_s`.
    Martingale {
        #[serde(default = "default_alpha")]
        alpha: f64,
        s: f64,
        t: f64,
        #[serde(default)]
        trim: f64,
    },
    /// KS between `X_{ct}` and `c^κ X_t` from two independent ensembles.
    Selfsim {
        #[serde(default = "default_alpha")]
        alpha: f64,
        t: f64,
        c: f64,
        /// Exponent under test; defaults to the ensemble's own.
        kappa: Option<f64>,
    },
    /// Per-time KS between this route and another one.
    Routes {
        #[serde(default = "default_alpha")]
        alpha: f64,
        other: Route,
        times: Vec<f64>,
    },
    /// Mean predictable QV at `t` against `t^{2κ} θ₁`, and against mean realized QV.
    Qv {
        t: f64,
        #[serde(default = "default_qv_tolerance")]
        rel_tol: f64,
    },
}

fn default_qv_tolerance() -> f64 {
    0.02
}

impl TestConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TestConfig::Marginal { .. } => "marginal",
            TestConfig::Martingale { .. } => "martingale",
            TestConfig::Selfsim { .. } => "selfsim",
            TestConfig::Routes { .. } => "routes",
            TestConfig::Qv { .. } => "qv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// `x`, `x^n`, or coefficients `c0,c1,...`.
    pub f: String,
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub probes: Vec<ProbeConfig>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_fd_samples")]
    pub fd_samples: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_h() -> f64 {
    1e-3
}

fn default_fd_samples() -> usize {
    1_000_000
}

fn default_mc_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(CliError::Config(format!("unknown format `{other}` (expected csv, json, svg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir(), formats: default_formats() }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.n_paths == 0 {
            return Err(CliError::Config("n_paths must be >= 1".into()));
        }
        for t in &self.tests {
            let alpha = match t {
                TestConfig::Marginal { alpha, .. }
                | TestConfig::Martingale { alpha, .. }
                | TestConfig::Selfsim { alpha, .. }
                | TestConfig::Routes { alpha, .. } => *alpha,
                TestConfig::Qv { rel_tol, .. } => {
                    if rel_tol.is_nan() || *rel_tol <= 0.0 {
                        return Err(CliError::Config("qv rel_tol must be positive".into()));
                    }
                    continue;
                }
            };
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(CliError::Config(format!("test `{}` has alpha {alpha} outside (0,1)", t.name())));
            }
        }
        Ok(())
    }
}
