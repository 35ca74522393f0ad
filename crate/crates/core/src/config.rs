//! TOML run configuration.
//!
//! ```toml
//! input = "no2.csv"
//! output = "out"
//! seed = 0
//! engine = "structured"
//!
//! [ingest]
//! value = "no2"
//! [[ingest.dimensions]]
//! name = "station"
//! column = "site"
//! inputs = ["easting", "northing"]
//! [[ingest.dimensions]]
//! name = "day"
//! column = "time"
//! kind = "timestamp_date"
//! [[ingest.dimensions]]
//! name = "hour"
//! column = "time"
//! kind = "timestamp_hour"
//!
//! [[kernels]]
//! family = "fbm"
//! gamma = 0.3
//! centred = true
//! squared = true
//!
//! [[models]]
//! name = "model1"
//! terms = ["0", "1", "2", "3"]
//! [[models]]
//! preset = "model4"
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::anova::TermCollection;
use crate::data::{GridDataset, ImputeConfig, IngestSpec};
use crate::error::{Error, Result};
use crate::gp::{Engine, FitConfig};
use crate::kernels::KernelSpec;
use crate::optim::BfgsConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    /// Defaults to the preset name, or `model<k>` by position.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub terms: Option<Vec<String>>,
    #[serde(default)]
    pub preset: Option<String>,
}

impl ModelEntry {
    pub fn preset(name: &str) -> Self {
        ModelEntry { name: None, terms: None, preset: Some(name.into()) }
    }

    /// Name and terms of the entry at 0-based `position` in a list.
    pub fn resolve(&self, position: usize, d: usize) -> Result<(String, TermCollection)> {
        let tc = match (&self.terms, &self.preset) {
            (Some(t), None) => TermCollection::parse(d, t)?,
            (None, Some(p)) => TermCollection::preset(p, d)?,
            _ => return Err(Error::Config(format!("model {} needs exactly one of terms or preset", position + 1))),
        };
        let name = self.name.clone().or_else(|| self.preset.clone()).unwrap_or_else(|| format!("model{}", position + 1));
        Ok((name, tc))
    }
}

/// Squared centred fBM with `gamma = 0.5` on every dimension.
pub fn default_kernel_specs(d: usize) -> Vec<KernelSpec> {
    vec![KernelSpec::fbm(1.0, 0.5).centred().squared(); d]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Dimension names whose inputs are min-max scaled to `[0, 1]`.
    pub min_max: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DstConfig {
    /// ISO-8601 local timestamp of the first shifted hour, e.g. `2020-03-29T01:00`.
    pub transition: String,
}

impl DstConfig {
    pub fn timestamp(&self) -> Result<NaiveDateTime> {
        parse_timestamp(&self.transition)
    }
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
        .ok_or_else(|| Error::Config(format!("`{s}` is not an ISO-8601 timestamp")))
}

/// The cleaning steps applied after ingestion.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cleaning {
    pub scaling: ScalingConfig,
    pub dst: Option<DstConfig>,
    pub impute: Option<ImputeConfig>,
}

impl Cleaning {
    pub fn scaled_dims(&self, ds: &GridDataset) -> Result<Vec<usize>> {
        self.scaling
            .min_max
            .iter()
            .map(|n| ds.dim_index(n).ok_or_else(|| Error::Config(format!("scaling names unknown dimension {n}"))))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectsConfig {
    /// Requests such as `3+1:3@station=KC1`.
    pub requests: Vec<String>,
    pub variance: bool,
    /// Model whose effects are exported; defaults to the first.
    pub model: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub threads: Option<usize>,
    pub ingest: IngestSpec,
    /// One per dimension; squared centred fBM with `gamma = 0.5` when empty.
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub optimizer: BfgsConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub dst: Option<DstConfig>,
    #[serde(default)]
    pub impute: Option<ImputeConfig>,
    #[serde(default)]
    pub effects: EffectsConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are taken from its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            if cfg.input.is_relative() {
                cfg.input = dir.join(&cfg.input);
            }
            if cfg.output.is_relative() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    pub fn d(&self) -> usize {
        self.ingest.dimensions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("the model list is empty".into()));
        }
        if self.ingest.dimensions.is_empty() {
            return Err(Error::Config("no dimensions are configured".into()));
        }
        if !self.kernels.is_empty() && self.kernels.len() != self.d() {
            return Err(Error::Config(format!("{} kernels given for {} dimensions", self.kernels.len(), self.d())));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        for name in &self.scaling.min_max {
            if !self.ingest.dimensions.iter().any(|d| &d.name == name) {
                return Err(Error::Config(format!("scaling names unknown dimension {name}")));
            }
        }
        if let Some(dst) = &self.dst {
            dst.timestamp()?;
        }
        self.resolved_models()?;
        Ok(())
    }

    /// Errors naming every configured column absent from `header`.
    pub fn check_columns(&self, header: &[String]) -> Result<()> {
        let mut wanted = vec![&self.ingest.value];
        for d in &self.ingest.dimensions {
            wanted.push(&d.column);
            wanted.extend(d.inputs.iter());
        }
        wanted.extend(self.ingest.missing_flag.iter());
        let absent: Vec<&str> = wanted.iter().filter(|c| !header.contains(c)).map(|c| c.as_str()).collect();
        if absent.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("columns not found in {}: {}", self.input.display(), absent.join(", "))))
        }
    }

    pub fn kernel_specs(&self) -> Vec<KernelSpec> {
        if self.kernels.is_empty() {
            default_kernel_specs(self.d())
        } else {
            self.kernels.clone()
        }
    }

    pub fn resolved_models(&self) -> Result<Vec<(String, TermCollection)>> {
        self.models.iter().enumerate().map(|(k, m)| m.resolve(k, self.d())).collect()
    }

    pub fn cleaning(&self) -> Cleaning {
        Cleaning { scaling: self.scaling.clone(), dst: self.dst.clone(), impute: self.impute.clone() }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { optimizer: self.optimizer.clone(), init: None, engine: self.engine }
    }
}
