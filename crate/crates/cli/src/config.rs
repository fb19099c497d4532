//! Run configuration: global flags layered over an optional flat config
//! file. Flags win; unknown file keys are rejected.

use serde::Deserialize;

use crate::error::CliError;

/// Flat key-value config file (TOML). Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub w_max: Option<f64>,
    pub jobs: Option<usize>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub token_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("bad config {}: {e}", path.display())))
    }
}

/// Fully resolved settings used by the subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub w_max: f64,
    pub jobs: usize,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub token_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub struct GlobalFlags {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub w_max: Option<f64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn resolve(flags: &GlobalFlags, file: ConfigFile) -> Self {
        RunConfig {
            seed: flags.seed.or(file.seed).unwrap_or(7),
            alpha: flags.alpha.or(file.alpha).unwrap_or(5.0),
            w_max: flags.w_max.or(file.w_max).unwrap_or(20.0),
            jobs: flags.jobs.or(file.jobs).unwrap_or(1),
            base_url: file.base_url,
            model: file.model,
            token_env: file.token_env,
            temperature: file.temperature.unwrap_or(0.0),
            max_tokens: file.max_tokens.unwrap_or(4096),
        }
    }

    pub fn metric_config(&self) -> dslbench::metrics::MetricConfig {
        dslbench::metrics::MetricConfig {
            alpha: self.alpha,
            w_max: self.w_max,
            ..Default::default()
        }
    }
}
