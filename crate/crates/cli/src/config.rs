//! JSON configuration schemas for the four subcommands.
//!
//! One JSON document per run; numeric parameters never come from the
//! environment so a (config, seed) pair pins a run completely.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use dplab_core::detection::SigmaSpec;
use dplab_core::io::matrix_from_rows;
use dplab_core::lti::{
    example_benchmark_plant, example_scalar, example_scalar_with_noise, DisturbanceSet, LtiSystem,
};
use dplab_core::Matrix;
use serde::Deserialize;

pub fn load_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Either a named example plant or inline system matrices.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Example {
        example: String,
        /// Process noise standard deviation for the scalar example.
        #[serde(default)]
        sigma_w: Option<f64>,
    },
    Inline {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        sigma_w: Vec<Vec<f64>>,
    },
}

impl SystemSpec {
    pub fn build(&self) -> Result<LtiSystem> {
        match self {
            SystemSpec::Example { example, sigma_w } => match example.as_str() {
                "scalar" => Ok(match sigma_w {
                    Some(s) => example_scalar_with_noise(*s),
                    None => example_scalar(),
                }),
                "benchmark" => Ok(example_benchmark_plant()),
                other => bail!("unknown example system '{other}' (expected scalar or benchmark)"),
            },
            SystemSpec::Inline { a, b, sigma_w } => {
                let a = matrix_from_rows(a, "A")?;
                let b = matrix_from_rows(b, "B")?;
                let sigma = matrix_from_rows(sigma_w, "sigma_w")?;
                Ok(LtiSystem::new(a, b, sigma, DisturbanceSet::Unbounded)?)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemSpec,
    #[serde(rename = "T")]
    pub t: usize,
    /// Initial state, defaults to the origin.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Input covariance, defaults to the identity.
    #[serde(default)]
    pub sigma_u: Option<Vec<Vec<f64>>>,
    /// Also write a CSV view of the trajectory.
    #[serde(default)]
    pub csv: bool,
}

fn default_mse_iters() -> usize {
    80
}
fn default_mse_restarts() -> usize {
    2
}
fn default_stealthy_iters() -> usize {
    150
}
fn default_stealthy_restarts() -> usize {
    3
}
fn default_lags() -> usize {
    5
}
fn default_stat_margin() -> f64 {
    0.35
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpecConfig {
    /// Residual-energy maximizer under relative Frobenius budgets.
    MseMax {
        delta_x: f64,
        delta_u: f64,
        #[serde(default = "default_mse_iters")]
        max_iters: usize,
        #[serde(default = "default_mse_restarts")]
        restarts: usize,
    },
    /// Detection-constrained estimate-shift maximizer.
    Stealthy {
        delta: f64,
        #[serde(default = "default_lags")]
        lags: usize,
        #[serde(default = "default_stealthy_iters")]
        max_iters: usize,
        #[serde(default = "default_stealthy_restarts")]
        restarts: usize,
        /// Fraction of the statistical budgets at which the solver's penalty
        /// activates (solutions stay interior; 1.0 penalizes only violations).
        #[serde(default = "default_stat_margin")]
        stat_margin: f64,
    },
    /// Data-independent Gaussian corruption with the given entrywise
    /// standard deviations.
    Oblivious { sigma_x: f64, sigma_u: f64 },
    /// Replaces the input record with a fresh draw from the nominal law.
    Indistinguishable {},
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Dataset file to poison.
    pub dataset: PathBuf,
    pub attack: AttackSpecConfig,
    /// Also write a CSV view of the poisoned trajectory.
    #[serde(default)]
    pub csv: bool,
}

/// Noise-covariance knowledge: either the matrix itself (nested rows) or
/// per-eigenvalue bounds as `{"lower": [...], "upper": [...]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpecConfig {
    Known(Vec<Vec<f64>>),
    EigenInterval { lower: Vec<f64>, upper: Vec<f64> },
}

impl SigmaSpecConfig {
    pub fn build(&self) -> Result<SigmaSpec> {
        Ok(match self {
            SigmaSpecConfig::Known(rows) => SigmaSpec::Known(matrix_from_rows(rows, "sigma_w")?),
            SigmaSpecConfig::EigenInterval { lower, upper } => {
                SigmaSpec::EigenInterval { lower: lower.clone(), upper: upper.clone() }
            }
        })
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_mc_draws() -> usize {
    200_000
}
fn default_true() -> bool {
    true
}

/// Test roster and suite parameters, shared by `detect` and experiments.
#[derive(Debug, Clone, Deserialize)]
pub struct DetectionSpec {
    /// Which tests to run and report. Valid names: residual_variance,
    /// partial_f, lag_correlation_1, portmanteau, input_norm, ks_input.
    pub tests: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub sigma_w: Option<SigmaSpecConfig>,
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default)]
    pub mc_seed: u64,
    /// Whether the nominal input law is N(0, I).
    #[serde(default = "default_true")]
    pub input_identity: bool,
}

pub const KNOWN_TESTS: [&str; 6] = [
    "residual_variance",
    "partial_f",
    "lag_correlation_1",
    "portmanteau",
    "input_norm",
    "ks_input",
];

impl DetectionSpec {
    pub fn validate(&self) -> Result<()> {
        for name in &self.tests {
            if !KNOWN_TESTS.contains(&name.as_str()) {
                bail!("unknown test '{name}' (expected one of {KNOWN_TESTS:?})");
            }
            if name == "residual_variance" && self.sigma_w.is_none() {
                bail!("test 'residual_variance' needs the sigma_w field");
            }
            if (name == "input_norm" || name == "ks_input") && !self.input_identity {
                bail!("test '{name}' needs input_identity = true");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
pub struct DetectConfig {
    /// Dataset file to screen.
    pub dataset: PathBuf,
    #[serde(flatten)]
    pub spec: DetectionSpec,
}

/// A registered experiment name plus optional overrides, or a fully
/// specified custom pipeline.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "ex1-input-poisoning", "ex2-mse-max", "ex3-stealthy", or "custom".
    pub name: String,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(rename = "T", default)]
    pub t: Option<usize>,
    /// Seed list; registered experiments have defaults.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Attack specification; required for "custom".
    #[serde(default)]
    pub attack: Option<AttackSpecConfig>,
    /// Detection roster; required for "custom".
    #[serde(default)]
    pub detection: Option<DetectionSpec>,
    /// Fallback output directory when --out is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub fn identity(m: usize) -> Matrix {
    Matrix::identity(m, m)
}
