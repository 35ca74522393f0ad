//! Per-term posterior means and variances, and prediction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::anova::Term;
use crate::error::{Error, Result};
use crate::kron::{kron_matvec, rotate_in, rotate_out};
use crate::Point;

/// Query inputs per dimension; the query grid is their Cartesian product.
pub type GridQuery = Vec<Vec<Point>>;

/// One input per dimension.
pub type QueryPoint = Vec<Point>;

/// Posterior mean of one term over the query grid of the term's own
/// dimensions, laid out last-dimension-fastest. The constant term has an
/// empty shape and a single value.
#[derive(Clone, Debug, PartialEq)]
pub struct TermMean {
    pub term: Term,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variances {
    pub values: Vec<f64>,
    /// Number of values raised from a negative rounding result to zero.
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub shape: Vec<usize>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub clamped: usize,
}

fn check_term(fm: &FittedModel, term: &Term) -> Result<bool> {
    if fm.terms().contains(term) {
        return Ok(true);
    }
    if term.is_constant() {
        // Models without the constant term have a zero constant component.
        return Ok(false);
    }
    Err(Error::UnknownTerm(term.to_string()))
}

impl FittedModel {
    /// Rows are unit-scale cross vectors of the query points against the
    /// training levels of dimension `dim`.
    pub fn cross_matrix(&self, dim: usize, points: &[Point]) -> Result<DMatrix<f64>> {
        let k = &self.factorization().kernels()[dim];
        let n = k.training().len();
        let mut m = DMatrix::zeros(points.len(), n);
        for (r, p) in points.iter().enumerate() {
            let v = k.cross_vector(p)?;
            for (c, x) in v.into_iter().enumerate() {
                m[(r, c)] = x;
            }
        }
        Ok(m)
    }
}

pub fn term_posterior_mean(fm: &FittedModel, term: &Term, query: &[Vec<Point>]) -> Result<TermMean> {
    let d = fm.state.d();
    let present = check_term(fm, term)?;
    if query.len() != d && !term.is_constant() {
        return Err(Error::Shape(format!("query has {} dimensions, model has {d}", query.len())));
    }
    let shape: Vec<usize> = term.dims().iter().map(|&l| query[l].len()).collect();
    let m: usize = shape.iter().product();
    if !present {
        return Ok(TermMean { term: term.clone(), shape, values: vec![0.0; m] });
    }
    let sizes = fm.factorization().sizes();
    let mut factors = Vec::with_capacity(d);
    for l in 0..d {
        if term.contains(l) {
            factors.push(fm.cross_matrix(l, &query[l])?);
        } else {
            factors.push(DMatrix::from_element(1, sizes[l], 1.0));
        }
    }
    let scale = fm.hp().term_scale(term);
    let mut values = kron_matvec(&factors, &fm.w)?;
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(TermMean { term: term.clone(), shape, values })
}

fn kron_vectors_into(parts: &[&[f64]], scale: f64, acc: &mut [f64]) {
    // Builds scale * (p_1 kron ... kron p_d) and adds it to `acc`.
    let mut cur = vec![scale];
    for p in parts {
        let mut next = Vec::with_capacity(cur.len() * p.len());
        for &a in &cur {
            next.extend(p.iter().map(|b| a * b));
        }
        cur = next;
    }
    for (a, c) in acc.iter_mut().zip(cur) {
        *a += c;
    }
}

/// Evaluates `Q' k_set(x)` and the prior `k_set(x, x)` for one query point.
struct Rotator<'a> {
    fm: &'a FittedModel,
    /// `Q_l' 1` per dimension.
    ones_rot: Vec<Vec<f64>>,
}

impl<'a> Rotator<'a> {
    fn new(fm: &'a FittedModel) -> Self {
        let ones_rot = fm
            .bases()
            .iter()
            .map(|b| (b.q.transpose() * nalgebra::DVector::from_element(b.size(), 1.0)).iter().copied().collect())
            .collect();
        Rotator { fm, ones_rot }
    }

    fn rotated(&self, set: &[Term], x: &QueryPoint) -> Result<(Vec<f64>, f64)> {
        let d = self.fm.state.d();
        if x.len() != d {
            return Err(Error::Shape(format!("query point has {} dimensions, model has {d}", x.len())));
        }
        let kernels = self.fm.factorization().kernels();
        let bases = self.fm.bases();
        let needed: Vec<bool> = (0..d).map(|l| set.iter().any(|t| t.contains(l))).collect();
        let mut cross_rot: Vec<Option<Vec<f64>>> = vec![None; d];
        let mut selfs = vec![1.0; d];
        for l in 0..d {
            if needed[l] {
                let c = kernels[l].cross_vector(&x[l])?;
                let r = bases[l].q.transpose() * nalgebra::DVector::from_vec(c);
                cross_rot[l] = Some(r.iter().copied().collect());
                selfs[l] = kernels[l].self_value(&x[l])?;
            }
        }
        let n = self.fm.factorization().n();
        let mut rot = vec![0.0; n];
        let mut prior = 0.0;
        for term in set {
            let scale = self.fm.hp().term_scale(term);
            let parts: Vec<&[f64]> = (0..d)
                .map(|l| if term.contains(l) { cross_rot[l].as_deref().expect("needed") } else { self.ones_rot[l].as_slice() })
                .collect();
            kron_vectors_into(&parts, scale, &mut rot);
            prior += scale * term.dims().iter().map(|&l| selfs[l]).product::<f64>();
        }
        Ok((rot, prior))
    }

    /// Posterior variance and mean of the summed terms at `x`.
    fn evaluate(&self, set: &[Term], x: &QueryPoint) -> Result<(f64, f64, bool)> {
        let (rot, prior) = self.rotated(set, x)?;
        let s2 = self.fm.hp().sigma2();
        let mut quad = 0.0;
        let mut mean = 0.0;
        for ((r, di), wr) in rot.iter().zip(&self.fm.diag.d_vec).zip(self.fm.w_rot()) {
            quad += r * r / (di + s2);
            mean += r * wr;
        }
        let var = prior - quad;
        Ok(if var < 0.0 { (0.0, mean, true) } else { (var, mean, false) })
    }
}

fn term_set(fm: &FittedModel, term: &Term) -> Result<Vec<Term>> {
    Ok(if check_term(fm, term)? { vec![term.clone()] } else { Vec::new() })
}

/// `k_j(x, x) - k_j(x)' (K + s^2 I)^{-1} k_j(x)` at each point, clamped at zero.
pub fn term_posterior_variance(fm: &FittedModel, term: &Term, points: &[QueryPoint]) -> Result<Variances> {
    let set = term_set(fm, term)?;
    set_variance(fm, &set, points, &term.to_string())
}

/// Posterior variance of the sum of several terms.
pub fn term_set_variance(fm: &FittedModel, terms: &[Term], points: &[QueryPoint]) -> Result<Variances> {
    let mut set = Vec::with_capacity(terms.len());
    for t in terms {
        set.extend(term_set(fm, t)?);
    }
    let label: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
    set_variance(fm, &set, points, &label.join("+"))
}

fn set_variance(fm: &FittedModel, set: &[Term], points: &[QueryPoint], term: &str) -> Result<Variances> {
    let rot = Rotator::new(fm);
    let mut values = Vec::with_capacity(points.len());
    let mut clamped = 0;
    for x in points {
        let (v, _, c) = rot.evaluate(set, x)?;
        clamped += c as usize;
        values.push(v);
    }
    if clamped > 0 {
        tracing::debug!(term = %term, clamped, "negative posterior variances clamped to zero");
    }
    Ok(Variances { values, clamped })
}

/// Full posterior mean and variance at explicit points.
pub fn predict_points(fm: &FittedModel, points: &[QueryPoint], include_noise: bool) -> Result<PointPrediction> {
    let set = fm.terms().terms().to_vec();
    let rot = Rotator::new(fm);
    let noise = if include_noise { fm.hp().sigma2() } else { 0.0 };
    let mut means = Vec::with_capacity(points.len());
    let mut variances = Vec::with_capacity(points.len());
    let mut clamped = 0;
    for x in points {
        let (v, m, c) = rot.evaluate(&set, x)?;
        clamped += c as usize;
        means.push(m);
        variances.push(v + noise);
    }
    Ok(PointPrediction { means, variances, clamped })
}

/// Every combination of the query grid, last dimension fastest.
pub fn grid_points(query: &[Vec<Point>]) -> Vec<QueryPoint> {
    let shape: Vec<usize> = query.iter().map(|q| q.len()).collect();
    let m: usize = shape.iter().product();
    let mut out = Vec::with_capacity(m);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..m {
        out.push(idx.iter().enumerate().map(|(l, &i)| query[l][i].clone()).collect());
        for l in (0..shape.len()).rev() {
            idx[l] += 1;
            if idx[l] < shape[l] {
                break;
            }
            idx[l] = 0;
        }
    }
    out
}

/// Broadcasts a term mean over the full query grid.
fn broadcast_add(tm: &TermMean, shape: &[usize], acc: &mut [f64]) {
    let d = shape.len();
    let dims = tm.term.dims();
    let mut idx = vec![0usize; d];
    for a in acc.iter_mut() {
        let mut k = 0;
        for (p, &l) in dims.iter().enumerate() {
            k = k * tm.shape[p] + idx[l];
        }
        *a += tm.values[k];
        for l in (0..d).rev() {
            idx[l] += 1;
            if idx[l] < shape[l] {
                break;
            }
            idx[l] = 0;
        }
    }
}

/// Posterior mean (sum of term means) and full-kernel variance over the
/// query grid.
pub fn predict(fm: &FittedModel, query: &[Vec<Point>], include_noise: bool) -> Result<Prediction> {
    let d = fm.state.d();
    if query.len() != d {
        return Err(Error::Shape(format!("query has {} dimensions, model has {d}", query.len())));
    }
    let shape: Vec<usize> = query.iter().map(|q| q.len()).collect();
    let m: usize = shape.iter().product();
    let mut means = vec![0.0; m];
    for term in fm.terms().terms() {
        let tm = term_posterior_mean(fm, term, query)?;
        broadcast_add(&tm, &shape, &mut means);
    }
    let pts = grid_points(query);
    let pp = predict_points(fm, &pts, include_noise)?;
    Ok(Prediction { shape, means, variances: pp.variances, clamped: pp.clamped })
}

/// Posterior mean at the training grid, `Q (D / (D + s^2)) Q' y`.
pub fn fitted_training_mean(fm: &FittedModel) -> Result<Vec<f64>> {
    let s2 = fm.hp().sigma2();
    let mut t = rotate_in(fm.bases(), fm.y())?;
    for (x, di) in t.iter_mut().zip(&fm.diag.d_vec) {
        *x *= di / (di + s2);
    }
    rotate_out(fm.bases(), &t)
}
