//! Base kernels and their Gram matrices.
//!
//! Raw kernels are evaluated pointwise by [`eval_kernel`]. Centring and
//! squaring are data dependent and therefore only exist at the Gram level:
//! [`gram`] builds the raw matrix and then applies centring and squaring,
//! in that order, against the training points. [`TrainedKernel`] keeps the
//! training-set statistics needed to extend the same construction to new
//! query points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Squared exponential.
    Se,
    /// Fractional Brownian motion.
    Fbm,
    Matern,
    Periodic,
    Polynomial,
    Constant,
}

/// A base kernel family together with its parameters and Gram-level flags.
///
/// Parameters that do not apply to a family are ignored. `offset` is the
/// polynomial offset `c` and doubles as the value of the constant kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub alpha: f64,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub period: f64,
    pub degree: u32,
    pub offset: f64,
    pub centred: bool,
    pub squared: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::Fbm,
            alpha: 1.0,
            rho: 1.0,
            gamma: 0.5,
            nu: 1.5,
            period: 1.0,
            degree: 1,
            offset: 1.0,
            centred: false,
            squared: false,
        }
    }
}

impl KernelSpec {
    pub fn se(alpha: f64, rho: f64) -> Self {
        KernelSpec { family: KernelFamily::Se, alpha, rho, ..Default::default() }
    }

    pub fn fbm(alpha: f64, gamma: f64) -> Self {
        KernelSpec { family: KernelFamily::Fbm, alpha, gamma, ..Default::default() }
    }

    pub fn matern(alpha: f64, rho: f64, nu: f64) -> Self {
        KernelSpec { family: KernelFamily::Matern, alpha, rho, nu, ..Default::default() }
    }

    pub fn periodic(alpha: f64, rho: f64, period: f64) -> Self {
        KernelSpec { family: KernelFamily::Periodic, alpha, rho, period, ..Default::default() }
    }

    pub fn polynomial(alpha: f64, degree: u32, offset: f64) -> Self {
        KernelSpec { family: KernelFamily::Polynomial, alpha, degree, offset, ..Default::default() }
    }

    pub fn constant(value: f64) -> Self {
        KernelSpec { family: KernelFamily::Constant, offset: value, ..Default::default() }
    }

    pub fn centred(mut self) -> Self {
        self.centred = true;
        self
    }

    pub fn squared(mut self) -> Self {
        self.squared = true;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// The same kernel with unit scale, as stored inside a model.
    pub fn unit_scale(&self) -> Self {
        self.clone().with_alpha(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        match self.family {
            KernelFamily::Se | KernelFamily::Matern | KernelFamily::Periodic if !(self.rho > 0.0 && self.rho.is_finite()) => {
                bad(format!("rho must be positive, got {}", self.rho))
            }
            KernelFamily::Fbm if !(self.gamma > 0.0 && self.gamma < 1.0) => {
                bad(format!("Hurst coefficient must lie in (0, 1), got {}", self.gamma))
            }
            KernelFamily::Matern if !(self.nu > 0.0 && self.nu.is_finite()) => {
                bad(format!("Matern smoothness must be positive, got {}", self.nu))
            }
            KernelFamily::Periodic if !(self.period > 0.0 && self.period.is_finite()) => {
                bad(format!("period must be positive, got {}", self.period))
            }
            KernelFamily::Polynomial if self.degree == 0 || self.offset < 0.0 => {
                bad(format!("polynomial kernel needs degree >= 1 and offset >= 0, got degree {} offset {}", self.degree, self.offset))
            }
            _ => Ok(()),
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Modified Bessel function of the second kind, `K_nu(x)` for `x > 0`.
///
/// Uses the integral `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.
/// The integrand is analytic and decays doubly exponentially, so the
/// trapezoidal rule converges geometrically in the step size.
pub(crate) fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const STEP: f64 = 0.02;
    let mut sum = 0.5 * (-x).exp();
    let mut t = STEP;
    loop {
        let term = (-x * t.cosh()).exp() * (nu * t).cosh();
        sum += term;
        if term < 1e-18 * sum || t > 60.0 {
            break;
        }
        t += STEP;
    }
    sum * STEP
}

fn matern_unit(nu: f64, r: f64, rho: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let s = r / rho;
    // Closed forms for the common half-integer smoothness values.
    if nu == 0.5 {
        return (-s).exp();
    }
    if nu == 1.5 {
        let a = 3f64.sqrt() * s;
        return (1.0 + a) * (-a).exp();
    }
    if nu == 2.5 {
        let a = 5f64.sqrt() * s;
        return (1.0 + a + a * a / 3.0) * (-a).exp();
    }
    let z = (2.0 * nu).sqrt() * s;
    if z > 700.0 {
        return 0.0;
    }
    2f64.powf(1.0 - nu) / gamma(nu) * z.powf(nu) * bessel_k(nu, z)
}

/// Raw kernel value without any argument checks.
fn raw_value(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let a2 = spec.alpha * spec.alpha;
    match spec.family {
        KernelFamily::Se => a2 * (-sq_dist(x, y) / (2.0 * spec.rho * spec.rho)).exp(),
        KernelFamily::Fbm => {
            let h = 2.0 * spec.gamma;
            let p = |v: f64| if v == 0.0 { 0.0 } else { v.powf(h) };
            0.5 * a2 * (p(norm(x)) + p(norm(y)) - p(sq_dist(x, y).sqrt()))
        }
        KernelFamily::Matern => a2 * matern_unit(spec.nu, sq_dist(x, y).sqrt(), spec.rho),
        KernelFamily::Periodic => {
            let s = (std::f64::consts::PI * sq_dist(x, y).sqrt() / spec.period).sin();
            a2 * (-2.0 * s * s / (spec.rho * spec.rho)).exp()
        }
        KernelFamily::Polynomial => {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            a2 * (dot + spec.offset).powi(spec.degree as i32)
        }
        KernelFamily::Constant => spec.offset,
    }
}

/// Evaluates the raw kernel `k(x, x')`.
///
/// Centred and squared kernels depend on a training set and are rejected;
/// use [`gram`] or [`TrainedKernel`] for those.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    spec.validate()?;
    if spec.centred || spec.squared {
        return Err(Error::Config("centred and squared kernels are only defined relative to training points".into()));
    }
    if x.len() != x2.len() {
        return Err(Error::Shape(format!("input dimensions differ: {} vs {}", x.len(), x2.len())));
    }
    Ok(raw_value(spec, x, x2))
}

/// A square Gram matrix with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub centred: bool,
    pub source: Option<KernelSpec>,
}

impl GramMatrix {
    /// Wraps an arbitrary symmetric matrix.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape(format!("Gram matrix must be square, got {}x{}", values.nrows(), values.ncols())));
        }
        Ok(GramMatrix { values, centred: false, source: None })
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.values)
    }

    /// Largest absolute row or column sum.
    pub fn max_margin_sum(&self) -> f64 {
        let rows = self.values.row_iter().map(|r| r.sum().abs());
        let cols = self.values.column_iter().map(|c| c.sum().abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

pub(crate) fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn raw_gram(spec: &KernelSpec, points: &[Point]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = raw_value(spec, &points[i], &points[j]);
            if !v.is_finite() {
                return Err(Error::Numeric(format!("kernel value at ({i}, {j}) is {v}")));
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

fn check_points(points: &[Point]) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::Config("at least one input point is required".into()));
    };
    if let Some(bad) = points.iter().position(|p| p.len() != first.len()) {
        return Err(Error::Shape(format!("point {bad} has dimension {} but point 0 has {}", points[bad].len(), first.len())));
    }
    Ok(())
}

/// Builds the Gram matrix of `spec` over `points`, applying centring and
/// then squaring when the spec asks for them.
pub fn gram(spec: &KernelSpec, points: &[Point]) -> Result<GramMatrix> {
    Ok(TrainedKernel::new(spec.clone(), points.to_vec())?.into_gram())
}

/// Returns `C K C` with `C = I - 11'/n`.
pub fn centre_gram(k: &GramMatrix) -> Result<GramMatrix> {
    let m = &k.values;
    if !m.is_square() {
        return Err(Error::Shape(format!("cannot centre a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let values = DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand);
    Ok(GramMatrix { values, centred: true, source: k.source.clone() })
}

/// Returns `K K`. Centring is preserved.
pub fn square_gram(k: &GramMatrix) -> Result<GramMatrix> {
    if !k.values.is_square() {
        return Err(Error::Shape("cannot square a non-square matrix".into()));
    }
    let mut values = &k.values * &k.values;
    symmetrize(&mut values);
    Ok(GramMatrix { values, centred: k.centred, source: k.source.clone() })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cross-covariance vector `(k(x_1, x*), ..., k(x_n, x*))` against the
/// training points, with centring and squaring taken relative to them.
pub fn cross_vector(spec: &KernelSpec, query: &[f64], training: &[Point]) -> Result<Vec<f64>> {
    TrainedKernel::new(spec.clone(), training.to_vec())?.cross_vector(query)
}

/// A kernel bound to its training points.
///
/// Stores the raw row means and grand mean used by empirical centring, and
/// the (possibly centred) Gram matrix that squaring multiplies by.
#[derive(Clone, Debug)]
pub struct TrainedKernel {
    spec: KernelSpec,
    training: Vec<Point>,
    raw_row_means: Vec<f64>,
    raw_grand_mean: f64,
    /// Raw or centred Gram, before squaring.
    base: DMatrix<f64>,
    gram: GramMatrix,
}

impl TrainedKernel {
    pub fn new(spec: KernelSpec, training: Vec<Point>) -> Result<Self> {
        spec.validate()?;
        check_points(&training)?;
        let raw = raw_gram(&spec, &training)?;
        let n = training.len() as f64;
        let raw_row_means: Vec<f64> = raw.row_iter().map(|r| r.sum() / n).collect();
        let raw_grand_mean = raw_row_means.iter().sum::<f64>() / n;
        let mut current = GramMatrix { values: raw, centred: false, source: Some(spec.clone()) };
        if spec.centred {
            current = centre_gram(&current)?;
        }
        let base = current.values.clone();
        if spec.squared {
            current = square_gram(&current)?;
        }
        Ok(TrainedKernel { spec, training, raw_row_means, raw_grand_mean, base, gram: current })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn training(&self) -> &[Point] {
        &self.training
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn into_gram(self) -> GramMatrix {
        self.gram
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        let want = self.training[0].len();
        if query.len() != want {
            return Err(Error::Shape(format!("query has dimension {} but training points have {want}", query.len())));
        }
        Ok(())
    }

    /// Cross vector before squaring, and the query's raw mean against training.
    fn base_cross(&self, query: &[f64]) -> (Vec<f64>, f64) {
        let mut v: Vec<f64> = self.training.iter().map(|xi| raw_value(&self.spec, xi, query)).collect();
        let query_mean = v.iter().sum::<f64>() / v.len() as f64;
        if self.spec.centred {
            for (vi, ri) in v.iter_mut().zip(&self.raw_row_means) {
                *vi = *vi - query_mean - ri + self.raw_grand_mean;
            }
        }
        (v, query_mean)
    }

    pub fn cross_vector(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.check_query(query)?;
        let (v, _) = self.base_cross(query);
        let out = if self.spec.squared {
            let n = v.len();
            let mut out = vec![0.0; n];
            for (j, vj) in v.iter().enumerate() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += self.base[(i, j)] * vj;
                }
            }
            out
        } else {
            v
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("cross kernel value at training index {i} is not finite")));
        }
        Ok(out)
    }

    /// The kernel evaluated at `(x*, x*)` under the same construction.
    pub fn self_value(&self, query: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        let (v, query_mean) = self.base_cross(query);
        if self.spec.squared {
            return Ok(v.iter().map(|a| a * a).sum());
        }
        let raw = raw_value(&self.spec, query, query);
        Ok(if self.spec.centred { raw - 2.0 * query_mean + self.raw_grand_mean } else { raw })
    }
}
