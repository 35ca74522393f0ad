//! JSON model export and re-import.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FitReport, FittedModel, ModelState};
use crate::anova::{HyperParams, TermCollection};
use crate::data::MinMax;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::Point;

pub const EXPORT_FORMAT: &str = "hagp-model/1";

/// Identifies the data a model was fitted to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDigest {
    pub shape: Vec<usize>,
    pub n: usize,
    /// SHA-256 over the shape, the level inputs and the response, as
    /// little-endian bit patterns.
    pub sha256: String,
}

pub fn grid_digest(levels: &[Vec<Point>], y: &[f64]) -> GridDigest {
    let shape: Vec<usize> = levels.iter().map(|l| l.len()).collect();
    let mut h = Sha256::new();
    for &s in &shape {
        h.update((s as u64).to_le_bytes());
    }
    for lvl in levels {
        for p in lvl {
            h.update((p.len() as u64).to_le_bytes());
            for v in p {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    for v in y {
        h.update(v.to_bits().to_le_bytes());
    }
    GridDigest { n: y.len(), shape, sha256: hex::encode(h.finalize()) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub format: String,
    pub grid: GridDigest,
    pub kernels: Vec<KernelSpec>,
    pub terms: TermCollection,
    pub hyperparameters: HyperParams,
    pub logml: f64,
    pub fit_report: FitReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Vec<Option<MinMax>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
}

impl FittedModel {
    pub fn export(&self, include_w: bool) -> ModelExport {
        ModelExport {
            format: EXPORT_FORMAT.into(),
            grid: grid_digest(&self.state.levels, self.y()),
            kernels: self.state.specs.clone(),
            terms: self.state.terms.clone(),
            hyperparameters: self.state.hp.clone(),
            logml: self.logml,
            fit_report: self.fit_report.clone(),
            scaling: None,
            w: include_w.then(|| self.w.clone()),
        }
    }

    /// Rebuilds a fitted model from an export and the data it was fitted
    /// to. Hyperparameters are taken as stored; nothing is re-optimised.
    pub fn from_export(export: &ModelExport, levels: Vec<Vec<Point>>, y: &[f64]) -> Result<Self> {
        if export.format != EXPORT_FORMAT {
            return Err(Error::Config(format!("unsupported model format `{}`", export.format)));
        }
        let digest = grid_digest(&levels, y);
        if digest != export.grid {
            return Err(Error::Config(format!("data digest {} does not match the exported model's {}", digest.sha256, export.grid.sha256)));
        }
        let state = ModelState::new(levels, export.kernels.clone(), export.terms.clone(), export.hyperparameters.clone())?;
        let fact = Arc::new(state.factorize()?);
        let mut fm = FittedModel::with_factorization(state, fact, y)?;
        fm.fit_report = export.fit_report.clone();
        Ok(fm)
    }
}
