//! Run configuration: one TOML file plus `section.key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use insider_core::verify::SuiteSettings;
use insider_core::{LevyConfig, MarketConfig, ModelSpec, QuadratureSpec, SignalConfig, TimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Paths written to per-path CSV files.
    #[serde(default = "default_dump_paths")]
    pub dump_paths: usize,
}

fn default_n_paths() -> usize {
    1000
}

fn default_dump_paths() -> usize {
    100
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            seed: 0,
            dump_paths: default_dump_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_qv_tolerance")]
    pub qv_tolerance: f64,
    #[serde(default = "default_y_grid")]
    pub y_grid: Vec<f64>,
    #[serde(default = "default_normalization_paths")]
    pub normalization_paths: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_qv_tolerance() -> f64 {
    insider_core::verify::QV_TOLERANCE
}

fn default_y_grid() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_normalization_paths() -> usize {
    4
}

fn default_max_attempts() -> usize {
    3
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            qv_tolerance: default_qv_tolerance(),
            y_grid: default_y_grid(),
            normalization_paths: default_normalization_paths(),
            max_attempts: default_max_attempts(),
        }
    }
}

impl VerifyConfig {
    pub fn settings(&self) -> SuiteSettings {
        SuiteSettings {
            qv_tolerance: self.qv_tolerance,
            y_grid: self.y_grid.clone(),
            normalization_paths: self.normalization_paths,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: TimeGrid,
    pub signal: SignalConfig,
    #[serde(default)]
    pub levy: LevyConfig,
    pub market: MarketConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            grid: self.grid,
            signal: self.signal.clone(),
            levy: self.levy.clone(),
            market: self.market.clone(),
        }
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into()?;
        if cfg.mc.n_paths == 0 {
            bail!("mc.n_paths must be at least 1");
        }
        Ok(cfg)
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override `{spec}` has an empty key segment");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{spec}`: `{p}` is not a table"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
