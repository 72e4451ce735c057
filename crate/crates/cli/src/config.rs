//! Settings shared by the subcommands. Values come from the command line,
//! then the `--config` file, then the defaults.

use std::path::Path;

use anyhow::Context;
use hotda_core::classify::ClassifierKind;
use hotda_core::ot::{SinkhornParams, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use hotda_core::wspectral::Bandwidth;
use serde::Deserialize;

use crate::UsageError;

pub const DEFAULT_EPS: f64 = 0.1;

/// Contents of a `--config` file. Keys are the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub eps: Option<f64>,
    pub eps_inner: Option<f64>,
    pub k: Option<usize>,
    pub sigma: Option<toml::Value>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub classifier: Option<String>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn sigma(&self) -> Option<String> {
        self.sigma.as_ref().map(|v| match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

pub fn parse_bandwidth(text: &str) -> Result<Bandwidth, UsageError> {
    match text {
        "auto" => Ok(Bandwidth::Auto),
        "median" => Ok(Bandwidth::MedianPairwise),
        value => match value.parse::<f64>() {
            Ok(s) if s.is_finite() && s > 0.0 => Ok(Bandwidth::Fixed(s)),
            _ => Err(UsageError(format!("--sigma must be `auto`, `median` or a positive number, got `{value}`"))),
        },
    }
}

pub fn parse_classifier(text: &str) -> Result<ClassifierKind, UsageError> {
    text.parse()
        .map_err(|_| UsageError(format!("--classifier must be `1nn` or `rbf-ls`, got `{text}`")))
}

/// Resolved solver settings.
#[derive(Debug, Clone, Copy)]
pub struct Solver {
    pub eps: f64,
    pub eps_inner: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub sigma: Bandwidth,
    pub seed: u64,
}

impl Solver {
    pub fn outer(&self) -> anyhow::Result<SinkhornParams> {
        self.params(self.eps)
    }

    pub fn inner(&self) -> anyhow::Result<SinkhornParams> {
        self.params(self.eps_inner)
    }

    pub fn params(&self, eps: f64) -> anyhow::Result<SinkhornParams> {
        Ok(SinkhornParams::new(eps)?
            .with_tolerance(self.tolerance)?
            .with_max_iterations(self.max_iter)?)
    }
}

/// Command-line values of the shared flags.
#[derive(Debug, Clone, Default)]
pub struct SolverFlags {
    pub eps: Option<f64>,
    pub eps_inner: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub sigma: Option<String>,
    pub seed: Option<u64>,
}

impl SolverFlags {
    pub fn resolve(&self, file: &FileConfig) -> Result<Solver, UsageError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(UsageError(format!("--{name} must be positive, got {v}")))
            }
        };
        let max_iter = self.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITERATIONS);
        if max_iter == 0 {
            return Err(UsageError("--max-iter must be at least 1".into()));
        }
        Ok(Solver {
            eps: positive("eps", self.eps.or(file.eps).unwrap_or(DEFAULT_EPS))?,
            eps_inner: positive("eps-inner", self.eps_inner.or(file.eps_inner).unwrap_or(DEFAULT_EPS))?,
            tolerance: positive("tolerance", self.tolerance.or(file.tolerance).unwrap_or(DEFAULT_TOLERANCE))?,
            max_iter,
            sigma: parse_bandwidth(self.sigma.clone().or_else(|| file.sigma()).as_deref().unwrap_or("auto"))?,
            seed: self.seed.or(file.seed).unwrap_or(0),
        })
    }
}
