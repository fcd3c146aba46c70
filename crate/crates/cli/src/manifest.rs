use bowlforge::IntegrationConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Integration settings given on the command line. Everything else is a library default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_cap: Option<f64>,
    /// Relative tolerance; the absolute tolerance follows at a hundredth of it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut cfg: IntegrationConfig) -> IntegrationConfig {
        if let Some(r) = self.r_max {
            cfg.r_max = r;
        }
        if let Some(r) = self.r_start {
            cfg.r_start = r;
        }
        if let Some(v) = self.v_cap {
            cfg.v_cap = v;
        }
        if let Some(t) = self.tol {
            cfg.rel_tol = t;
            cfg.abs_tol = 1e-2 * t;
        }
        cfg
    }
}

/// What was run, with what, and where the results went.
///
/// Two runs with equal manifests (ignoring `wall_time_s`) write byte-identical CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub speed: String,
    pub dim: usize,
    pub overrides: ConfigOverrides,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, speed: &str, dim: usize, overrides: ConfigOverrides) -> Self {
        Self {
            command: command.to_string(),
            speed: speed.to_string(),
            dim,
            overrides,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
        }
    }
}
