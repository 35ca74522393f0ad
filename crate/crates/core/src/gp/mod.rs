//! Marginal likelihood, hyperparameter fitting and the fitted model.

mod export;
mod posterior;
mod sampling;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anova::{validate_terms, HyperParams, TermCollection, TermMode};
use crate::data::GridDataset;
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec, TrainedKernel};
use crate::kron::{eigendecompose_centred, logdet_marginal, rotate_in, solve_marginal, EigenBasis, ModelDiagonal, TermDiagonals};
use crate::optim::{minimize, BfgsConfig};
use crate::oracle;
use crate::Point;

pub use export::{grid_digest, GridDigest, ModelExport};
pub use posterior::{
    fitted_training_mean, grid_points, predict, predict_points, term_posterior_mean, term_posterior_variance, term_set_variance, GridQuery,
    PointPrediction, Prediction, QueryPoint, TermMean, Variances,
};
pub use sampling::{sample_kernel_prior, sample_model_prior, sample_structured_prior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Half-width of the box around the initial point, in log space.
const LOG_BOUND: f64 = 25.0;
/// Smallest noise scale relative to its starting value. Exactly representable
/// data otherwise drives `sigma` towards zero, where `1 / (D + s^2)` turns
/// rounding in the eigenbasis into visible errors.
const SIGMA_FLOOR: f64 = 1e-6;

/// Everything defining a model except the response.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub levels: Vec<Vec<Point>>,
    pub specs: Vec<KernelSpec>,
    pub terms: TermCollection,
    pub hp: HyperParams,
}

impl ModelState {
    pub fn new(levels: Vec<Vec<Point>>, specs: Vec<KernelSpec>, terms: TermCollection, hp: HyperParams) -> Result<Self> {
        let d = terms.d();
        if levels.len() != d || specs.len() != d {
            return Err(Error::Shape(format!(
                "model has {d} dimensions but {} level tables and {} kernels were given",
                levels.len(),
                specs.len()
            )));
        }
        validate_terms(&terms).map_err(|r| Error::InvalidTerms(r.to_string()))?;
        for l in terms.active_dims() {
            if !specs[l].centred {
                return Err(Error::Config(format!("kernel of dimension {} must be centred", l + 1)));
            }
        }
        for s in &specs {
            s.validate()?;
        }
        if let Some(l) = levels.iter().position(|v| v.is_empty()) {
            return Err(Error::Shape(format!("dimension {} has no levels", l + 1)));
        }
        hp.validate(d)?;
        Ok(ModelState { levels, specs, terms, hp })
    }

    pub fn from_grid(grid: &GridDataset, specs: Vec<KernelSpec>, terms: TermCollection, hp: HyperParams) -> Result<Self> {
        Self::new(grid.levels(), specs, terms, hp)
    }

    pub fn d(&self) -> usize {
        self.terms.d()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|v| v.len()).collect()
    }

    pub fn n(&self) -> usize {
        self.sizes().iter().product()
    }

    pub fn with_hp(&self, hp: HyperParams) -> Self {
        ModelState { hp, ..self.clone() }
    }

    pub fn factorize(&self) -> Result<Factorization> {
        Factorization::new(&self.levels, &self.specs)
    }
}

/// Per-dimension unit-scale kernels and their centred eigenbases.
///
/// Independent of the term set and of all scale hyperparameters.
#[derive(Clone, Debug)]
pub struct Factorization {
    kernels: Vec<TrainedKernel>,
    bases: Vec<EigenBasis>,
}

impl Factorization {
    pub fn new(levels: &[Vec<Point>], specs: &[KernelSpec]) -> Result<Self> {
        let mut kernels = Vec::with_capacity(specs.len());
        let mut bases = Vec::with_capacity(specs.len());
        for (pts, spec) in levels.iter().zip(specs) {
            let tk = TrainedKernel::new(spec.unit_scale(), pts.clone())?;
            let basis = if spec.centred {
                eigendecompose_centred(tk.gram())?
            } else {
                // Only reached for dimensions outside every term; the basis
                // is never paired with eigenvalues.
                let n = pts.len();
                let g = GramMatrix::from_matrix(nalgebra::DMatrix::zeros(n, n))?;
                eigendecompose_centred(&g)?
            };
            kernels.push(tk);
            bases.push(basis);
        }
        Ok(Factorization { kernels, bases })
    }

    pub fn bases(&self) -> &[EigenBasis] {
        &self.bases
    }

    pub fn kernels(&self) -> &[TrainedKernel] {
        &self.kernels
    }

    pub fn grams(&self) -> Vec<GramMatrix> {
        self.kernels.iter().map(|k| k.gram().clone()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.size()).collect()
    }

    pub fn n(&self) -> usize {
        self.sizes().iter().product()
    }
}

fn check_y(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Shape(format!("response has length {} but the grid has {n} cells", y.len())));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("response value {i} is not finite")));
    }
    Ok(())
}

/// `-(1/2) y' w - (1/2) log|K + s^2 I| - (n/2) log 2 pi`, with `w` and `D`.
pub fn logml_with(fact: &Factorization, terms: &TermCollection, hp: &HyperParams, y: &[f64]) -> Result<(f64, Vec<f64>, ModelDiagonal)> {
    check_y(y, fact.n())?;
    let diag = TermDiagonals::new(terms, fact.bases())?.assemble(hp);
    let s2 = hp.sigma2();
    let w = solve_marginal(fact.bases(), &diag, s2, y)?;
    let quad: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
    let n = y.len() as f64;
    let v = -0.5 * quad - 0.5 * logdet_marginal(&diag, s2) - 0.5 * n * LN_2PI;
    if !v.is_finite() {
        return Err(Error::NonFinite(hp.to_vec()));
    }
    Ok((v, w, diag))
}

/// Log marginal likelihood of `y` under the model's current hyperparameters.
pub fn log_marginal_likelihood(ms: &ModelState, y: &[f64]) -> Result<f64> {
    let fact = ms.factorize()?;
    Ok(logml_with(&fact, &ms.terms, &ms.hp, y)?.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Structured,
    Dense,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Engine::Structured),
            "dense" => Ok(Engine::Dense),
            _ => Err(Error::Config(format!("unknown engine `{s}` (expected structured or dense)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub optimizer: BfgsConfig,
    /// Starting point; scale-aware defaults from `y` when absent.
    pub init: Option<HyperParams>,
    pub engine: Engine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub initial_logml: f64,
    pub engine: Engine,
    /// Names of the optimised parameters, e.g. `alpha0`, `alpha2`, `sigma`.
    pub free_parameters: Vec<String>,
}

impl FitReport {
    /// Report for a model whose hyperparameters were supplied, not fitted.
    pub fn fixed(logml: f64) -> Self {
        FitReport {
            iterations: 0,
            evaluations: 0,
            converged: true,
            wall_time_s: 0.0,
            initial_logml: logml,
            engine: Engine::Structured,
            free_parameters: Vec::new(),
        }
    }
}

/// Default starting point: `alpha0 = sd(y)`, `alpha_l = 1`, `sigma = sd(y)/2`.
/// Tensor-only models carry their scale in the first per-dimension alpha.
pub fn default_init(terms: &TermCollection, y: &[f64]) -> HyperParams {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = if y.len() > 1 { y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let mut sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        sd = mean.abs().max(1.0);
    }
    let d = terms.d();
    match terms.mode() {
        TermMode::Hierarchical => HyperParams::new(sd, vec![1.0; d], sd / 2.0),
        TermMode::TensorOnly => {
            let mut alpha = vec![1.0; d];
            alpha[0] = sd;
            HyperParams::new(1.0, alpha, sd / 2.0)
        }
    }
}

/// Map between log-parameter vectors and hyperparameters.
struct ParamMap {
    base: HyperParams,
    fit_alpha0: bool,
    free_alpha: Vec<usize>,
}

impl ParamMap {
    fn new(terms: &TermCollection, init: HyperParams) -> Self {
        match terms.mode() {
            TermMode::Hierarchical => ParamMap { base: init, fit_alpha0: true, free_alpha: terms.active_dims() },
            TermMode::TensorOnly => ParamMap { base: init, fit_alpha0: false, free_alpha: vec![0] },
        }
    }

    fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.fit_alpha0 {
            v.push("alpha0".to_string());
        }
        v.extend(self.free_alpha.iter().map(|l| format!("alpha{}", l + 1)));
        v.push("sigma".into());
        v
    }

    fn theta(&self, hp: &HyperParams) -> Vec<f64> {
        let mut v = Vec::new();
        if self.fit_alpha0 {
            v.push(hp.alpha0.ln());
        }
        v.extend(self.free_alpha.iter().map(|&l| hp.alpha[l].ln()));
        v.push(hp.sigma.ln());
        v
    }

    fn hp(&self, theta: &[f64]) -> HyperParams {
        let mut hp = self.base.clone();
        let mut it = theta.iter();
        if self.fit_alpha0 {
            hp.alpha0 = it.next().expect("alpha0").exp();
        }
        for &l in &self.free_alpha {
            hp.alpha[l] = it.next().expect("alpha").exp();
        }
        hp.sigma = it.next().expect("sigma").exp();
        hp
    }
}

/// Maximises the log marginal likelihood over the free log-parameters.
pub fn fit(ms: &ModelState, y: &[f64], cfg: &FitConfig) -> Result<FittedModel> {
    let fact = Arc::new(ms.factorize()?);
    fit_with(ms, fact, y, cfg)
}

/// As [`fit`], reusing an existing factorisation of the same levels and kernels.
pub fn fit_with(ms: &ModelState, fact: Arc<Factorization>, y: &[f64], cfg: &FitConfig) -> Result<FittedModel> {
    let start = Instant::now();
    check_y(y, fact.n())?;
    let init = match &cfg.init {
        Some(hp) => {
            hp.validate(ms.d())?;
            hp.clone()
        }
        None => default_init(&ms.terms, y),
    };
    let map = ParamMap::new(&ms.terms, init.clone());
    let theta0 = map.theta(&init);

    let tdiag = TermDiagonals::new(&ms.terms, fact.bases())?;
    let y_rot = rotate_in(fact.bases(), y)?;
    let n = y.len() as f64;
    let grams = if cfg.engine == Engine::Dense { Some(fact.grams()) } else { None };
    let objective = |theta: &[f64]| -> f64 {
        let hp = map.hp(theta);
        if let Some(g) = &grams {
            return oracle::dense_logml_from_grams(&ms.terms, g, &hp, y).map_or(f64::INFINITY, |v| -v);
        }
        let diag = tdiag.assemble(&hp);
        let s2 = hp.sigma2();
        let mut acc = 0.5 * n * LN_2PI;
        for (yr, di) in y_rot.iter().zip(&diag.d_vec) {
            let v = di + s2;
            acc += 0.5 * (yr * yr / v + v.ln());
        }
        acc
    };
    let f0 = objective(&theta0);
    if !f0.is_finite() {
        return Err(Error::Initialization(init.to_vec()));
    }
    let mut lower: Vec<f64> = theta0.iter().map(|t| t - LOG_BOUND).collect();
    *lower.last_mut().expect("sigma is always free") = theta0.last().expect("sigma") + SIGMA_FLOOR.ln();
    let upper: Vec<f64> = theta0.iter().map(|t| t + LOG_BOUND).collect();
    let res = minimize(objective, &theta0, &lower, &upper, &cfg.optimizer);
    let best = if res.f <= f0 { res.x.clone() } else { theta0.clone() };
    let hp = map.hp(&best);
    let state = ms.with_hp(hp);
    let mut fm = FittedModel::with_factorization(state, fact, y)?;
    if cfg.engine == Engine::Dense {
        fm.logml = oracle::dense_logml_from_grams(&fm.state.terms, &fm.fact.grams(), &fm.state.hp, y)?;
    }
    fm.fit_report = FitReport {
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
        initial_logml: -f0,
        engine: cfg.engine,
        free_parameters: map.names(),
    };
    tracing::debug!(terms = %fm.state.terms, logml = fm.logml, iterations = res.iterations, "fit finished");
    Ok(fm)
}

/// A model with hyperparameters, factorisation and weights `w = (K + s^2 I)^{-1} y`.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub state: ModelState,
    pub diag: ModelDiagonal,
    pub w: Vec<f64>,
    pub logml: f64,
    pub fit_report: FitReport,
    fact: Arc<Factorization>,
    y: Vec<f64>,
    w_rot: Vec<f64>,
}

impl FittedModel {
    /// Builds the model at the state's hyperparameters without optimising.
    pub fn at(state: ModelState, y: &[f64]) -> Result<Self> {
        let fact = Arc::new(state.factorize()?);
        Self::with_factorization(state, fact, y)
    }

    pub fn with_factorization(state: ModelState, fact: Arc<Factorization>, y: &[f64]) -> Result<Self> {
        let (logml, w, diag) = logml_with(&fact, &state.terms, &state.hp, y)?;
        let w_rot = rotate_in(fact.bases(), &w)?;
        Ok(FittedModel { state, diag, w, logml, fit_report: FitReport::fixed(logml), fact, y: y.to_vec(), w_rot })
    }

    pub fn factorization(&self) -> &Arc<Factorization> {
        &self.fact
    }

    pub fn bases(&self) -> &[EigenBasis] {
        self.fact.bases()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub(crate) fn w_rot(&self) -> &[f64] {
        &self.w_rot
    }

    pub fn terms(&self) -> &TermCollection {
        &self.state.terms
    }

    pub fn hp(&self) -> &HyperParams {
        &self.state.hp
    }
}

/// One row of a shape-parameter search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeCandidate {
    pub gamma: f64,
    pub logml: Option<f64>,
    pub hyperparameters: Option<HyperParams>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub dim: usize,
    pub best: Option<f64>,
    pub table: Vec<ShapeCandidate>,
}

/// Fits the model once per Hurst coefficient for dimension `dim` and picks
/// the value with the highest fitted log marginal likelihood.
pub fn grid_search_shape(ms: &ModelState, y: &[f64], dim: usize, candidates: &[f64], cfg: &FitConfig) -> Result<GridSearchResult> {
    if dim >= ms.d() {
        return Err(Error::Config(format!("dimension {} does not exist", dim + 1)));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for &gamma in candidates {
        let mut cand = ms.clone();
        cand.specs[dim].gamma = gamma;
        let row = match cand.specs[dim].validate().and_then(|_| fit(&cand, y, cfg)) {
            Ok(fm) => ShapeCandidate { gamma, logml: Some(fm.logml), hyperparameters: Some(fm.state.hp), error: None },
            Err(e) => ShapeCandidate { gamma, logml: None, hyperparameters: None, error: Some(e.to_string()) },
        };
        table.push(row);
    }
    let best = table
        .iter()
        .filter_map(|r| r.logml.map(|v| (r.gamma, v)))
        .fold(None, |acc: Option<(f64, f64)>, (g, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((g, v)),
        })
        .map(|(g, _)| g);
    Ok(GridSearchResult { dim, best, table })
}
