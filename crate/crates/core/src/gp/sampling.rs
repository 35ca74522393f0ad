//! Draws from zero-mean Gaussian-process priors.
//!
//! Dense draws use `f = V sqrt(max(lam, 0)) z` from a symmetric
//! eigendecomposition of the covariance. Centred and fBM covariances are
//! singular, and a draw built this way keeps their null directions exactly
//! without jitter.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Factorization, ModelState};
use crate::anova::{assemble_dense_gram, HyperParams, TermCollection, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelSpec};
use crate::kron::{rotate_out, TermDiagonals};
use crate::Point;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn draw_dense(k: DMatrix<f64>, seed: u64) -> Vec<f64> {
    let n = k.nrows();
    let eig = SymmetricEigen::new(k);
    let z = normals(n, seed);
    let scaled = DVector::from_iterator(n, eig.eigenvalues.iter().zip(&z).map(|(l, zi)| l.max(0.0).sqrt() * zi));
    (eig.eigenvectors * scaled).iter().copied().collect()
}

/// One draw at `points` from the prior of a single kernel. Centring and
/// squaring are taken relative to `points`.
pub fn sample_kernel_prior(spec: &KernelSpec, points: &[Point], seed: u64) -> Result<Vec<f64>> {
    if points.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { n: points.len(), limit: DENSE_LIMIT });
    }
    Ok(draw_dense(gram(spec, points)?.values, seed))
}

/// One draw over the model's training grid from the dense model covariance.
pub fn sample_model_prior(ms: &ModelState, seed: u64) -> Result<Vec<f64>> {
    let n = ms.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let grams = ms.factorize()?.grams();
    Ok(draw_dense(assemble_dense_gram(&ms.terms, &grams, &ms.hp)?, seed))
}

/// One draw over the grid as `Q D^{1/2} z`, for grids of any size.
pub fn sample_structured_prior(fact: &Factorization, terms: &TermCollection, hp: &HyperParams, seed: u64) -> Result<Vec<f64>> {
    let diag = TermDiagonals::new(terms, fact.bases())?.assemble(hp);
    let z = normals(diag.len(), seed);
    let scaled: Vec<f64> = diag.d_vec.iter().zip(&z).map(|(d, zi)| d.max(0.0).sqrt() * zi).collect();
    rotate_out(fact.bases(), &scaled)
}
