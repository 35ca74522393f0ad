//! Dense reference computations.
//!
//! Everything here materialises the full `n x n` covariance and works by
//! Cholesky factorisation, so it is limited to small grids. The structured
//! engine is tested against these functions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::anova::{assemble_dense_gram, HyperParams, Term, TermCollection, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::gp::{ModelState, QueryPoint};
use crate::kernels::{GramMatrix, TrainedKernel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky of `K + s^2 I`, retrying once with a small diagonal jitter.
fn factor(mut a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let jitter = 1e-10 * a.trace() / n as f64;
    for i in 0..n {
        a[(i, i)] += jitter;
    }
    Cholesky::new(a).ok_or(Error::NotPsd { min: f64::NAN, max: f64::NAN })
}

fn unit_kernels(ms: &ModelState) -> Result<Vec<TrainedKernel>> {
    ms.levels.iter().zip(&ms.specs).map(|(pts, spec)| TrainedKernel::new(spec.unit_scale(), pts.clone())).collect()
}

/// Dense `K` for the model at its current hyperparameters.
pub fn dense_gram(ms: &ModelState) -> Result<DMatrix<f64>> {
    let grams: Vec<GramMatrix> = unit_kernels(ms)?.into_iter().map(|k| k.into_gram()).collect();
    assemble_dense_gram(&ms.terms, &grams, &ms.hp)
}

fn marginal(k: DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    let n = k.nrows();
    k + DMatrix::identity(n, n) * sigma2
}

/// Log marginal likelihood via dense Cholesky, from unit-scale Gram matrices.
pub fn dense_logml_from_grams(tc: &TermCollection, grams: &[GramMatrix], hp: &HyperParams, y: &[f64]) -> Result<f64> {
    let k = assemble_dense_gram(tc, grams, hp)?;
    if k.nrows() != y.len() {
        return Err(Error::Shape(format!("response has length {} but the grid has {}", y.len(), k.nrows())));
    }
    let chol = factor(marginal(k, hp.sigma2()))?;
    let yv = DVector::from_column_slice(y);
    let w = chol.solve(&yv);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let v = -0.5 * yv.dot(&w) - 0.5 * logdet - 0.5 * y.len() as f64 * LN_2PI;
    if !v.is_finite() {
        return Err(Error::NonFinite(hp.to_vec()));
    }
    Ok(v)
}

/// `(K + s^2 I)^{-1} y` from unit-scale Gram matrices.
pub fn dense_solve_from_grams(tc: &TermCollection, grams: &[GramMatrix], hp: &HyperParams, y: &[f64]) -> Result<Vec<f64>> {
    let k = assemble_dense_gram(tc, grams, hp)?;
    if k.nrows() != y.len() {
        return Err(Error::Shape(format!("response has length {} but the grid has {}", y.len(), k.nrows())));
    }
    let chol = factor(marginal(k, hp.sigma2()))?;
    Ok(chol.solve(&DVector::from_column_slice(y)).iter().copied().collect())
}

pub fn dense_logml(ms: &ModelState, y: &[f64]) -> Result<f64> {
    let grams: Vec<GramMatrix> = unit_kernels(ms)?.into_iter().map(|k| k.into_gram()).collect();
    dense_logml_from_grams(&ms.terms, &grams, &ms.hp, y)
}

/// `w = (K + s^2 I)^{-1} y`.
pub fn dense_weights(ms: &ModelState, y: &[f64]) -> Result<Vec<f64>> {
    let chol = factor(marginal(dense_gram(ms)?, ms.hp.sigma2()))?;
    Ok(chol.solve(&DVector::from_column_slice(y)).iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensePosterior {
    pub means: Vec<f64>,
    /// Full-kernel posterior variances, without noise.
    pub variances: Vec<f64>,
    pub term_means: Vec<(Term, Vec<f64>)>,
    pub term_variances: Vec<(Term, Vec<f64>)>,
}

/// Multi-index of flat grid position `i`, last dimension fastest.
fn unravel(mut i: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for l in (0..sizes.len()).rev() {
        idx[l] = i % sizes[l];
        i /= sizes[l];
    }
    idx
}

/// Posterior quantities at explicit query points by direct linear algebra.
pub fn dense_posterior(ms: &ModelState, y: &[f64], query: &[QueryPoint]) -> Result<DensePosterior> {
    let n = ms.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let kernels = unit_kernels(ms)?;
    let sizes = ms.sizes();
    let d = ms.d();
    let grams: Vec<GramMatrix> = kernels.iter().map(|k| k.gram().clone()).collect();
    let chol = factor(marginal(assemble_dense_gram(&ms.terms, &grams, &ms.hp)?, ms.hp.sigma2()))?;
    let w = chol.solve(&DVector::from_column_slice(y));
    let indices: Vec<Vec<usize>> = (0..n).map(|i| unravel(i, &sizes)).collect();

    let terms = ms.terms.terms();
    let mut term_cross = vec![DMatrix::zeros(n, query.len()); terms.len()];
    let mut term_prior = vec![vec![0.0; query.len()]; terms.len()];
    for (qj, x) in query.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Shape(format!("query point has {} dimensions, model has {d}", x.len())));
        }
        let cross: Vec<Vec<f64>> = (0..d).map(|l| kernels[l].cross_vector(&x[l])).collect::<Result<_>>()?;
        let selfs: Vec<f64> = (0..d).map(|l| kernels[l].self_value(&x[l])).collect::<Result<_>>()?;
        for (t, term) in terms.iter().enumerate() {
            let scale = ms.hp.term_scale(term);
            for (i, idx) in indices.iter().enumerate() {
                term_cross[t][(i, qj)] = scale * term.dims().iter().map(|&l| cross[l][idx[l]]).product::<f64>();
            }
            term_prior[t][qj] = scale * term.dims().iter().map(|&l| selfs[l]).product::<f64>();
        }
    }

    let mut total_cross = DMatrix::zeros(n, query.len());
    let mut total_prior = vec![0.0; query.len()];
    let mut term_means = Vec::new();
    let mut term_variances = Vec::new();
    for (t, term) in terms.iter().enumerate() {
        let c = &term_cross[t];
        let mean = c.transpose() * &w;
        let solved = chol.solve(c);
        let var: Vec<f64> = (0..query.len()).map(|j| term_prior[t][j] - c.column(j).dot(&solved.column(j))).collect();
        term_means.push((term.clone(), mean.iter().copied().collect()));
        term_variances.push((term.clone(), var));
        total_cross += c;
        for (a, b) in total_prior.iter_mut().zip(&term_prior[t]) {
            *a += b;
        }
    }
    let means = (total_cross.transpose() * &w).iter().copied().collect();
    let solved = chol.solve(&total_cross);
    let variances = (0..query.len()).map(|j| total_prior[j] - total_cross.column(j).dot(&solved.column(j))).collect();
    Ok(DensePosterior { means, variances, term_means, term_variances })
}
