use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{opt_num, write_csv};
use crate::anova::{HyperParams, TermCollection, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::gp::{logml_with, sample_structured_prior, Factorization};
use crate::kernels::KernelSpec;
use crate::kron::solve_marginal;
use crate::oracle;

/// Parses `59x147x24` into `[59, 147, 24]`.
pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let dims: std::result::Result<Vec<usize>, _> = s.split(['x', 'X', '*']).map(|p| p.trim().parse::<usize>()).collect();
    match dims {
        Ok(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => Ok(v),
        _ => Err(Error::Config(format!("`{s}` is not a grid shape like 4x5x3"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sizes: Vec<Vec<usize>>,
    pub preset: String,
    pub seed: u64,
    /// Run the dense arm where the grid is small enough.
    pub dense: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { sizes: vec![vec![4, 5, 6], vec![59, 147, 24]], preset: "model4".into(), seed: 0, dense: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub shape: Vec<usize>,
    pub n: usize,
    pub preset: String,
    pub factorize_s: f64,
    pub structured_logml_s: f64,
    pub structured_solve_s: f64,
    pub structured_logml: f64,
    pub dense_logml_s: Option<f64>,
    pub dense_solve_s: Option<f64>,
    pub dense_logml: Option<f64>,
    /// Relative difference of the two logml values.
    pub rel_diff: Option<f64>,
    /// Largest relative difference between the two solves.
    pub solve_rel_diff: Option<f64>,
    pub note: Option<String>,
}

impl BenchRow {
    pub fn speedup(&self) -> Option<f64> {
        self.dense_logml_s.map(|d| d / self.structured_logml_s.max(f64::MIN_POSITIVE))
    }
}

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let header: Vec<String> = [
        "shape",
        "n",
        "preset",
        "factorize_s",
        "structured_logml_s",
        "structured_solve_s",
        "structured_logml",
        "dense_logml_s",
        "dense_solve_s",
        "dense_logml",
        "rel_diff",
        "solve_rel_diff",
        "speedup",
        "note",
    ]
    .map(String::from)
    .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let shape: Vec<String> = r.shape.iter().map(|n| n.to_string()).collect();
            vec![
                shape.join("x"),
                r.n.to_string(),
                r.preset.clone(),
                r.factorize_s.to_string(),
                r.structured_logml_s.to_string(),
                r.structured_solve_s.to_string(),
                r.structured_logml.to_string(),
                opt_num(r.dense_logml_s),
                opt_num(r.dense_solve_s),
                opt_num(r.dense_logml),
                opt_num(r.rel_diff),
                opt_num(r.solve_rel_diff),
                opt_num(r.speedup()),
                r.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(writer, &header, &body)
}

/// Synthetic problem: squared centred fBM kernels on `1..=n_l`, each
/// scaled to unit average prior variance, and a structured prior draw
/// plus unit-variance-scaled noise as the response.
pub struct SyntheticProblem {
    pub fact: Factorization,
    pub terms: TermCollection,
    pub hp: HyperParams,
    pub y: Vec<f64>,
}

pub fn synthetic_problem(shape: &[usize], preset: &str, seed: u64) -> Result<SyntheticProblem> {
    let d = shape.len();
    let terms = TermCollection::preset(preset, d)?;
    let levels: Vec<Vec<Vec<f64>>> = shape.iter().map(|&n| (1..=n).map(|i| vec![i as f64]).collect()).collect();
    let specs = vec![KernelSpec::fbm(1.0, 0.5).centred().squared(); d];
    let fact = Factorization::new(&levels, &specs)?;
    let alpha: Vec<f64> = fact
        .grams()
        .iter()
        .map(|g| {
            let mean_diag = g.values.diagonal().mean();
            if mean_diag > 0.0 {
                1.0 / mean_diag.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let hp = HyperParams::new(1.0, alpha, 0.5);
    let mut y = sample_structured_prior(&fact, &terms, &hp, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let noise = Normal::new(0.0, hp.sigma).expect("positive sd");
    for v in y.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    Ok(SyntheticProblem { fact, terms, hp, y })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn bench_one(shape: &[usize], cfg: &BenchConfig) -> Result<BenchRow> {
    let n: usize = shape.iter().product();
    let t0 = Instant::now();
    let p = synthetic_problem(shape, &cfg.preset, cfg.seed)?;
    let factorize_s = t0.elapsed().as_secs_f64();

    let t = Instant::now();
    let (logml, _, diag) = logml_with(&p.fact, &p.terms, &p.hp, &p.y)?;
    let structured_logml_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let w = solve_marginal(p.fact.bases(), &diag, p.hp.sigma2(), &p.y)?;
    let structured_solve_s = t.elapsed().as_secs_f64();

    let mut row = BenchRow {
        shape: shape.to_vec(),
        n,
        preset: cfg.preset.clone(),
        factorize_s,
        structured_logml_s,
        structured_solve_s,
        structured_logml: logml,
        dense_logml_s: None,
        dense_solve_s: None,
        dense_logml: None,
        rel_diff: None,
        solve_rel_diff: None,
        note: None,
    };
    if !cfg.dense {
        return Ok(row);
    }
    if n > DENSE_LIMIT {
        row.note = Some(format!("dense arm skipped: n = {n} exceeds {DENSE_LIMIT}"));
        return Ok(row);
    }
    let grams = p.fact.grams();
    let t = Instant::now();
    let dl = oracle::dense_logml_from_grams(&p.terms, &grams, &p.hp, &p.y)?;
    row.dense_logml_s = Some(t.elapsed().as_secs_f64());
    let t = Instant::now();
    let dw = oracle::dense_solve_from_grams(&p.terms, &grams, &p.hp, &p.y)?;
    row.dense_solve_s = Some(t.elapsed().as_secs_f64());
    row.dense_logml = Some(dl);
    row.rel_diff = Some(rel(logml, dl));
    let scale = dw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    row.solve_rel_diff = Some(w.iter().zip(&dw).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max));
    Ok(row)
}

/// Times structured and dense evaluation on synthetic data for each size.
/// Per-size failures are recorded in the row's note.
pub fn bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    cfg.sizes
        .iter()
        .map(|shape| {
            bench_one(shape, cfg).unwrap_or_else(|e| BenchRow {
                shape: shape.clone(),
                n: shape.iter().product(),
                preset: cfg.preset.clone(),
                factorize_s: 0.0,
                structured_logml_s: 0.0,
                structured_solve_s: 0.0,
                structured_logml: f64::NAN,
                dense_logml_s: None,
                dense_solve_s: None,
                dense_logml: None,
                rel_diff: None,
                solve_rel_diff: None,
                note: Some(e.to_string()),
            })
        })
        .collect()
}
