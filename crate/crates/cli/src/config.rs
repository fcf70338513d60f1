use std::fs;
use std::path::{Path, PathBuf};

use chainsolve::network::DEFAULT_MAX_DEPTH;
use chainsolve::{make_model, Method, ModelConfig, ModelSpec, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "chainsolve.config/v1";

/// A run configuration. Together with the seeds it fixes every output byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { m: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub variant: Variant,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Recursive,
            variant: Variant::Deterministic,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// First seed; `count` consecutive seeds are simulated.
    pub seed: u64,
    pub count: u64,
    pub max_depth: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            count: 1,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

impl NetworkConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (self.seed..self.seed + self.count).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub file: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.schema != CONFIG_SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported schema {:?}, expected {CONFIG_SCHEMA:?}",
                config.schema
            )));
        }
        if config.grid.m < 2 {
            return Err(CliError::Config(format!("grid.m must be at least 2, got {}", config.grid.m)));
        }
        if !(config.solver.tol > 0.0 && config.solver.tol.is_finite()) {
            return Err(CliError::Config(format!("solver.tol must be positive, got {}", config.solver.tol)));
        }
        make_model::<f64>(&config.model).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

pub fn build_model(config: &ModelConfig) -> Result<ModelSpec<f64>, CliError> {
    let model = make_model(config).map_err(|e| CliError::Config(e.to_string()))?;
    for warning in model.warnings() {
        eprintln!("warning: {warning}");
    }
    Ok(model)
}
