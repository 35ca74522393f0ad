use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{opt_num, write_csv};
use crate::anova::{HyperParams, TermCollection};
use crate::data::GridDataset;
use crate::error::Result;
use crate::gp::{fit_with, Factorization, FitConfig, FittedModel, ModelState};
use crate::kernels::KernelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub terms: Vec<String>,
    pub alpha0: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub logml: Option<f64>,
    /// Difference to the first model's logml.
    pub delta_logml: Option<f64>,
    pub converged: Option<bool>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub models: Vec<Option<FittedModel>>,
}

impl Comparison {
    pub fn write_csv<W: std::io::Write>(&self, writer: W, d: usize) -> Result<()> {
        write_comparison_csv(&self.rows, d, writer)
    }
}

/// Writes comparison rows for a `d`-dimensional model family.
pub fn write_comparison_csv<W: std::io::Write>(rows: &[ComparisonRow], d: usize, writer: W) -> Result<()> {
    let mut header: Vec<String> = vec!["model".into(), "terms".into(), "alpha0".into()];
    header.extend((1..=d).map(|l| format!("alpha{l}")));
    header.extend(["sigma", "logml", "delta_logml", "converged", "wall_time_s", "error"].map(String::from));
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.model.clone(), r.terms.join(" "), opt_num(r.alpha0)];
            for l in 0..d {
                v.push(opt_num(r.alpha.as_ref().map(|a| a[l])));
            }
            v.push(opt_num(r.sigma));
            v.push(opt_num(r.logml));
            v.push(opt_num(r.delta_logml));
            v.push(r.converged.map(|c| c.to_string()).unwrap_or_default());
            v.push(r.wall_time_s.to_string());
            v.push(r.error.clone().unwrap_or_default());
            v
        })
        .collect();
    write_csv(writer, &header, &rows)
}

/// Fits every model on the same data. Failures are recorded per row.
pub fn compare(ds: &GridDataset, specs: &[KernelSpec], models: &[(String, TermCollection)], cfg: &FitConfig) -> Result<Comparison> {
    let y = ds.complete_y()?;
    let fact = Arc::new(Factorization::new(&ds.levels(), specs)?);
    let results: Vec<(ComparisonRow, Option<FittedModel>)> = models
        .par_iter()
        .map(|(name, tc)| {
            let start = Instant::now();
            let outcome = ModelState::from_grid(ds, specs.to_vec(), tc.clone(), HyperParams::ones(tc.d()))
                .and_then(|ms| fit_with(&ms, fact.clone(), y, cfg));
            let wall = start.elapsed().as_secs_f64();
            match outcome {
                Ok(fm) => {
                    let hp = fm.hp().clone();
                    let row = ComparisonRow {
                        model: name.clone(),
                        terms: tc.term_strings(),
                        alpha0: Some(hp.alpha0),
                        alpha: Some(hp.alpha.clone()),
                        sigma: Some(hp.sigma),
                        logml: Some(fm.logml),
                        delta_logml: None,
                        converged: Some(fm.fit_report.converged),
                        wall_time_s: wall,
                        error: None,
                    };
                    (row, Some(fm))
                }
                Err(e) => {
                    tracing::warn!(model = %name, error = %e, "model fit failed");
                    let row = ComparisonRow {
                        model: name.clone(),
                        terms: tc.term_strings(),
                        alpha0: None,
                        alpha: None,
                        sigma: None,
                        logml: None,
                        delta_logml: None,
                        converged: None,
                        wall_time_s: wall,
                        error: Some(e.to_string()),
                    };
                    (row, None)
                }
            }
        })
        .collect();
    let (mut rows, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let reference = rows.first().and_then(|r| r.logml);
    for r in rows.iter_mut() {
        r.delta_logml = match (r.logml, reference) {
            (Some(v), Some(base)) => Some(v - base),
            _ => None,
        };
    }
    Ok(Comparison { rows, models })
}
