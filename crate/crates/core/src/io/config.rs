//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{AdhesionSpec, ContactSpec, GradientSpec};
use crate::studies::{AdhesionStudy, SimConfig, SweepSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Through-thickness profile of the simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientConfig {
    /// Bottom (electrode side) conductivity, S/m.
    pub sigma_low: f64,
    /// Top (contact side) conductivity, S/m.
    pub sigma_up: f64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self { sigma_low: 0.2, sigma_up: 0.2 }
    }
}

impl GradientConfig {
    pub fn spec(&self, height: f64) -> Result<GradientSpec> {
        GradientSpec::across(self.sigma_low, self.sigma_up, height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub gradient: GradientConfig,
    /// Contact cases for `simulate`, one frame each.
    #[serde(default)]
    pub contacts: Vec<ContactSpec>,
    /// Optional dot mask for `simulate`.
    #[serde(default)]
    pub adhesion_mask: Option<AdhesionSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    /// Thickness study, mm.
    #[serde(default = "default_thicknesses")]
    pub thicknesses: Vec<f64>,
    #[serde(default)]
    pub adhesion: AdhesionStudy,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_thicknesses() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sim: SimConfig::default(),
            gradient: GradientConfig::default(),
            contacts: Vec::new(),
            adhesion_mask: None,
            sweep: SweepSpec::default(),
            thicknesses: default_thicknesses(),
            adhesion: AdhesionStudy::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates; errors carry `source:line:column`.
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("{source}:{}:{}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.sim.validate()?;
        self.gradient.spec(self.sim.height)?;
        if let Some(t) = self.thicknesses.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::config(format!("thicknesses must be positive, got {t}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
