//! Kronecker-structured linear algebra over centred eigenbases.
//!
//! Every centred Gram matrix has `1/sqrt(n)` as a null vector. Choosing that
//! vector as the first basis column makes the all-ones matrix diagonal in
//! the same basis (it becomes `n e_1 e_1'`), so any sum of Kronecker
//! products of centred Grams and all-ones factors is diagonalised by one
//! Kronecker basis.
//!
//! Vectors over the grid use the last-dimension-fastest layout
//! `index = ((i_1 n_2 + i_2) ...) n_d + i_d`.

use std::borrow::Borrow;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::anova::{HyperParams, Term, TermCollection};
use crate::error::{Error, Result};
use crate::kernels::{symmetrize, GramMatrix};

/// Eigenvalues in `[-NEG_TOL * max, 0)` are clamped; smaller ones are an error.
const NEG_TOL: f64 = 1e-8;
/// Eigenvalues with magnitude up to `ZERO_TOL * max` form the zero space.
const ZERO_TOL: f64 = 1e-10;
const CENTRING_TOL: f64 = 1e-8;

/// Orthonormal eigenbasis of a centred Gram matrix with `q[:, 0] = 1/sqrt(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    pub q: DMatrix<f64>,
    pub lam: Vec<f64>,
    pub zero_mult: usize,
}

impl EigenBasis {
    pub fn size(&self) -> usize {
        self.lam.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lam.iter().copied().fold(0.0, f64::max)
    }
}

/// Eigendecomposition of a centred PSD matrix with the constant vector
/// placed first.
pub fn eigendecompose_centred(kc: &GramMatrix) -> Result<EigenBasis> {
    let n = kc.size();
    if n == 0 {
        return Err(Error::Shape("empty Gram matrix".into()));
    }
    let norm = kc.inf_norm();
    let margin = kc.max_margin_sum();
    if margin > CENTRING_TOL * norm {
        return Err(Error::Centring(format!("row or column sum {margin:e} exceeds {CENTRING_TOL:e} * {norm:e}")));
    }
    let q1 = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    if n == 1 {
        return Ok(EigenBasis { q: DMatrix::from_element(1, 1, 1.0), lam: vec![0.0], zero_mult: 1 });
    }

    // Householder reflector with H e_1 = q1; its other columns span the
    // complement of the constant vector to working precision.
    let mut v = q1.clone();
    v[0] -= 1.0;
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let h2 = h.columns(1, n - 1).into_owned();
    let mut inner = h2.transpose() * &kc.values * &h2;
    symmetrize(&mut inner);
    let eig = SymmetricEigen::new(inner);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < -NEG_TOL * lmax || (lmax == 0.0 && -lmin > f64::EPSILON * norm.max(f64::MIN_POSITIVE)) {
        return Err(Error::NotPsd { min: lmin, max: lmax });
    }

    // Zeros first, then positive eigenvalues ascending.
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let zeros = order.iter().take_while(|&&i| eig.eigenvalues[i] <= ZERO_TOL * lmax).count();
    let k = zeros + 1;

    let rotated = &h2 * &eig.eigenvectors;
    let mut q = DMatrix::zeros(n, n);
    q.set_column(0, &q1);
    let mut lam = vec![0.0; n];
    for (j, &i) in order.iter().enumerate() {
        q.set_column(j + 1, &rotated.column(i));
        if j >= zeros {
            lam[j + 1] = eig.eigenvalues[i];
        }
    }
    Ok(EigenBasis { q, lam, zero_mult: k })
}

fn check_lengths<M: Borrow<DMatrix<f64>>>(factors: &[M], len: usize, transpose: bool) -> Result<(Vec<usize>, Vec<usize>)> {
    let (ins, outs): (Vec<usize>, Vec<usize>) = factors
        .iter()
        .map(|f| {
            let f = f.borrow();
            if transpose {
                (f.nrows(), f.ncols())
            } else {
                (f.ncols(), f.nrows())
            }
        })
        .unzip();
    let n: usize = ins.iter().product();
    if n != len {
        return Err(Error::Shape(format!("Kronecker factors act on length {n}, vector has length {len}")));
    }
    Ok((ins, outs))
}

/// Applies one factor along `axis` of a tensor with the given shape.
fn apply_axis(m: &DMatrix<f64>, transpose: bool, shape: &[usize], axis: usize, v: &[f64]) -> Vec<f64> {
    let c = shape[axis];
    let rows = if transpose { m.ncols() } else { m.nrows() };
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    // Row-major copy of the effective operator: op[(r, i)] at r * c + i.
    let mut op = vec![0.0; rows * c];
    for r in 0..rows {
        for i in 0..c {
            op[r * c + i] = if transpose { m[(i, r)] } else { m[(r, i)] };
        }
    }
    let mut out = vec![0.0; outer * rows * inner];
    if outer == 0 || rows == 0 || inner == 0 {
        return out;
    }
    let block_in = c * inner;
    let block_out = rows * inner;
    let work = |(o, dst): (usize, &mut [f64])| {
        let src = &v[o * block_in..(o + 1) * block_in];
        if inner == 1 {
            for r in 0..rows {
                let row = &op[r * c..(r + 1) * c];
                dst[r] = row.iter().zip(src).map(|(a, b)| a * b).sum();
            }
        } else {
            for r in 0..rows {
                let acc = &mut dst[r * inner..(r + 1) * inner];
                for i in 0..c {
                    let a = op[r * c + i];
                    if a == 0.0 {
                        continue;
                    }
                    let s = &src[i * inner..(i + 1) * inner];
                    for (x, y) in acc.iter_mut().zip(s) {
                        *x += a * y;
                    }
                }
            }
        }
    };
    if outer * block_out >= 1 << 15 {
        out.par_chunks_mut(block_out).enumerate().for_each(work);
    } else {
        out.chunks_mut(block_out).enumerate().for_each(work);
    }
    out
}

fn kron_apply<M: Borrow<DMatrix<f64>>>(factors: &[M], v: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let (ins, outs) = check_lengths(factors, v.len(), transpose)?;
    let mut shape = ins;
    let mut cur = v.to_vec();
    // Last factor first, matching the reshape-multiply iteration.
    for axis in (0..factors.len()).rev() {
        cur = apply_axis(factors[axis].borrow(), transpose, &shape, axis, &cur);
        shape[axis] = outs[axis];
    }
    Ok(cur)
}

/// `(A_1 kron ... kron A_d) v` without forming the Kronecker matrix.
/// Factors may be rectangular.
pub fn kron_matvec<M: Borrow<DMatrix<f64>>>(factors: &[M], v: &[f64]) -> Result<Vec<f64>> {
    kron_apply(factors, v, false)
}

/// `(A_1 kron ... kron A_d)' v`.
pub fn kron_matvec_transposed<M: Borrow<DMatrix<f64>>>(factors: &[M], v: &[f64]) -> Result<Vec<f64>> {
    kron_apply(factors, v, true)
}

/// Diagonal of `D` in `K = Q D Q'`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDiagonal {
    pub d_vec: Vec<f64>,
}

impl ModelDiagonal {
    pub fn len(&self) -> usize {
        self.d_vec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_vec.is_empty()
    }
}

fn kron_vectors(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for p in parts {
        let mut next = Vec::with_capacity(out.len() * p.len());
        for &a in &out {
            next.extend(p.iter().map(|b| a * b));
        }
        out = next;
    }
    out
}

/// The `A_l` diagonal: `n_l` in the first slot and zero elsewhere.
fn ones_diagonal(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    a[0] = n as f64;
    a
}

fn check_bases(tc: &TermCollection, bases: &[EigenBasis], sizes: &[usize]) -> Result<()> {
    if bases.len() != tc.d() || sizes.len() != tc.d() {
        return Err(Error::Shape(format!(
            "model has {} dimensions but {} bases and {} sizes were given",
            tc.d(),
            bases.len(),
            sizes.len()
        )));
    }
    if let Some(l) = (0..tc.d()).find(|&l| bases[l].size() != sizes[l]) {
        return Err(Error::Shape(format!("basis {l} has size {} but the grid has {}", bases[l].size(), sizes[l])));
    }
    Ok(())
}

/// Unit-scale diagonal of a single term.
pub fn term_diagonal(term: &Term, bases: &[EigenBasis]) -> Vec<f64> {
    let parts: Vec<Vec<f64>> =
        bases.iter().enumerate().map(|(l, b)| if term.contains(l) { b.lam.clone() } else { ones_diagonal(b.size()) }).collect();
    let refs: Vec<&[f64]> = parts.iter().map(|p| p.as_slice()).collect();
    kron_vectors(&refs)
}

/// `D = alpha0^2 sum_terms kron_l v_l` with `v_l = alpha_l^2 lam_l` for
/// dimensions in the term and `(n_l, 0, ..., 0)` otherwise.
pub fn assemble_model_diagonal(tc: &TermCollection, bases: &[EigenBasis], sizes: &[usize], hp: &HyperParams) -> Result<ModelDiagonal> {
    check_bases(tc, bases, sizes)?;
    hp.validate(tc.d())?;
    let n: usize = sizes.iter().product();
    let mut d_vec = vec![0.0; n];
    for term in tc.terms() {
        let parts: Vec<Vec<f64>> = (0..tc.d())
            .map(|l| {
                if term.contains(l) {
                    let a2 = hp.alpha[l] * hp.alpha[l];
                    bases[l].lam.iter().map(|x| a2 * x).collect()
                } else {
                    ones_diagonal(sizes[l])
                }
            })
            .collect();
        let refs: Vec<&[f64]> = parts.iter().map(|p| p.as_slice()).collect();
        for (acc, v) in d_vec.iter_mut().zip(kron_vectors(&refs)) {
            *acc += v;
        }
    }
    let a02 = hp.alpha0 * hp.alpha0;
    d_vec.iter_mut().for_each(|x| *x *= a02);
    Ok(ModelDiagonal { d_vec })
}

/// Per-term unit-scale diagonals, so that rescaling only needs a weighted sum.
#[derive(Clone, Debug)]
pub struct TermDiagonals {
    terms: Vec<Term>,
    diags: Vec<Vec<f64>>,
}

impl TermDiagonals {
    pub fn new(tc: &TermCollection, bases: &[EigenBasis]) -> Result<Self> {
        let sizes: Vec<usize> = bases.iter().map(|b| b.size()).collect();
        check_bases(tc, bases, &sizes)?;
        let diags = tc.terms().iter().map(|t| term_diagonal(t, bases)).collect();
        Ok(TermDiagonals { terms: tc.terms().to_vec(), diags })
    }

    /// Same result as [`assemble_model_diagonal`], in `O(n |terms|)` flops.
    pub fn assemble(&self, hp: &HyperParams) -> ModelDiagonal {
        let n = self.diags.first().map_or(0, |v| v.len());
        let mut d_vec = vec![0.0; n];
        for (term, diag) in self.terms.iter().zip(&self.diags) {
            let s = hp.term_scale(term);
            for (acc, v) in d_vec.iter_mut().zip(diag) {
                *acc += s * v;
            }
        }
        ModelDiagonal { d_vec }
    }
}

/// `log |K + sigma^2 I| = sum_i log(D_ii + sigma^2)`.
pub fn logdet_marginal(d: &ModelDiagonal, sigma2: f64) -> f64 {
    d.d_vec.iter().map(|x| (x + sigma2).ln()).sum()
}

fn qs(bases: &[EigenBasis]) -> Vec<&DMatrix<f64>> {
    bases.iter().map(|b| &b.q).collect()
}

/// `Q' v` for the Kronecker basis.
pub fn rotate_in(bases: &[EigenBasis], v: &[f64]) -> Result<Vec<f64>> {
    kron_matvec_transposed(&qs(bases), v)
}

/// `Q v` for the Kronecker basis.
pub fn rotate_out(bases: &[EigenBasis], v: &[f64]) -> Result<Vec<f64>> {
    kron_matvec(&qs(bases), v)
}

/// `(K + sigma^2 I)^{-1} v = Q (D + sigma^2)^{-1} Q' v`.
pub fn solve_marginal(bases: &[EigenBasis], d: &ModelDiagonal, sigma2: f64, v: &[f64]) -> Result<Vec<f64>> {
    if d.len() != v.len() {
        return Err(Error::Shape(format!("diagonal has length {} but vector has {}", d.len(), v.len())));
    }
    let mut t = rotate_in(bases, v)?;
    for (x, di) in t.iter_mut().zip(&d.d_vec) {
        *x /= di + sigma2;
    }
    rotate_out(bases, &t)
}

/// `K v = Q D Q' v`.
pub fn structured_multiply(bases: &[EigenBasis], d: &ModelDiagonal, v: &[f64]) -> Result<Vec<f64>> {
    if d.len() != v.len() {
        return Err(Error::Shape(format!("diagonal has length {} but vector has {}", d.len(), v.len())));
    }
    let mut t = rotate_in(bases, v)?;
    for (x, di) in t.iter_mut().zip(&d.d_vec) {
        *x *= di;
    }
    rotate_out(bases, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anova::{assemble_dense_gram, TermMode};
    use crate::kernels::{centre_gram, gram, KernelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        random_matrix(rng, n, n).qr().q()
    }

    /// Centred PSD matrix `C B B' C` with `B` of the given rank.
    fn random_centred(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> GramMatrix {
        let b = random_matrix(rng, n, rank);
        let k = GramMatrix::from_matrix(&b * b.transpose()).unwrap();
        centre_gram(&k).unwrap()
    }

    fn dense_kron_all(fs: &[DMatrix<f64>]) -> DMatrix<f64> {
        fs.iter().skip(1).fold(fs[0].clone(), |acc, f| acc.kronecker(f))
    }

    #[test]
    fn two_point_example() {
        let kc = GramMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.])).unwrap();
        let b = eigendecompose_centred(&kc).unwrap();
        assert_eq!(b.lam[0], 0.0);
        assert_relative_eq!(b.lam[1], 2.0, epsilon = 1e-14);
        let h = 1.0 / 2f64.sqrt();
        assert_relative_eq!(b.q[(0, 0)], h, epsilon = 1e-15);
        assert_relative_eq!(b.q[(1, 0)], h, epsilon = 1e-15);
        // The second column is determined up to sign.
        let s = b.q[(0, 1)].signum();
        assert_relative_eq!(b.q[(0, 1)] * s, h, epsilon = 1e-14);
        assert_relative_eq!(b.q[(1, 1)] * s, -h, epsilon = 1e-14);
    }

    #[test]
    fn zero_matrix_and_degenerate_size() {
        let b = eigendecompose_centred(&GramMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap()).unwrap();
        assert_eq!(b.lam, vec![0.0; 3]);
        assert_eq!(b.zero_mult, 3);
        let qtq = b.q.transpose() * &b.q;
        assert!((qtq - DMatrix::identity(3, 3)).abs().max() < 1e-14);
        for i in 0..3 {
            assert_relative_eq!(b.q[(i, 0)], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        }
        let one = eigendecompose_centred(&GramMatrix::from_matrix(DMatrix::zeros(1, 1)).unwrap()).unwrap();
        assert_eq!(one.q, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(one.lam, vec![0.0]);
    }

    #[test]
    fn rejects_uncentred_and_indefinite() {
        let k = GramMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(eigendecompose_centred(&k), Err(Error::Centring(_))));
        let kc = centre_gram(&GramMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.5]))).unwrap()).unwrap();
        assert!(matches!(eigendecompose_centred(&kc), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn rank_deficient_bases_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, rank) in &[(6, 2), (10, 1), (12, 5), (8, 7)] {
            let kc = random_centred(&mut rng, n, rank);
            let b = eigendecompose_centred(&kc).unwrap();
            assert!(b.zero_mult >= n - rank);
            let qtq = b.q.transpose() * &b.q;
            assert!((qtq - DMatrix::identity(n, n)).abs().max() <= 1e-10);
            let rec = &b.q * DMatrix::from_diagonal(&DVector::from_vec(b.lam.clone())) * b.q.transpose();
            assert!((rec - &kc.values).abs().max() <= 1e-9 * b.lambda_max());
        }
    }

    #[test]
    fn identity_factors_are_identity() {
        let v: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        let out = kron_matvec(&[DMatrix::identity(2, 2), DMatrix::identity(3, 3)], &v).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn matvec_matches_dense_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shape in [vec![2, 3], vec![3, 2, 4], vec![6, 6, 6], vec![5], vec![1, 4, 1]] {
            let fs: Vec<DMatrix<f64>> = shape.iter().map(|&n| random_matrix(&mut rng, n, n)).collect();
            let n: usize = shape.iter().product();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dense = dense_kron_all(&fs);
            let want = &dense * DVector::from_vec(v.clone());
            let want_t = dense.transpose() * DVector::from_vec(v.clone());
            let got = kron_matvec(&fs, &v).unwrap();
            let got_t = kron_matvec_transposed(&fs, &v).unwrap();
            assert!((DVector::from_vec(got) - &want).norm() <= 1e-12 * want.norm());
            assert!((DVector::from_vec(got_t) - &want_t).norm() <= 1e-12 * want_t.norm());
        }
    }

    #[test]
    fn rectangular_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fs = vec![random_matrix(&mut rng, 4, 2), DMatrix::from_element(1, 3, 1.0), random_matrix(&mut rng, 2, 5)];
        let v: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = dense_kron_all(&fs) * DVector::from_vec(v.clone());
        let got = kron_matvec(&fs, &v).unwrap();
        assert_eq!(got.len(), 8);
        assert!((DVector::from_vec(got) - &want).norm() <= 1e-12 * want.norm());
        assert!(matches!(kron_matvec(&fs, &v[..29]), Err(Error::Shape(_))));
    }

    #[test]
    fn orthonormal_factors_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fs: Vec<DMatrix<f64>> = [2, 3, 2].iter().map(|&n| random_orthonormal(&mut rng, n)).collect();
        let v: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = kron_matvec(&fs, &v).unwrap();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let no = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_relative_eq!(nv, no, max_relative = 1e-12);
    }

    #[test]
    fn main_effect_diagonal_example() {
        let (l1, l2) = (0.7, 1.9);
        let mk = |l: f64| EigenBasis { q: DMatrix::identity(2, 2), lam: vec![0.0, l], zero_mult: 1 };
        let tc = TermCollection::main_effects(2);
        let d = assemble_model_diagonal(&tc, &[mk(l1), mk(l2)], &[2, 2], &HyperParams::ones(2)).unwrap();
        assert_eq!(d.d_vec, vec![4.0, 2.0 * l2, 2.0 * l1, 0.0]);
        let constant = TermCollection::new(2, [Term::constant()], TermMode::Hierarchical).unwrap();
        let hp = HyperParams::new(1.5, vec![1.0, 1.0], 1.0);
        let d = assemble_model_diagonal(&constant, &[mk(l1), mk(l2)], &[2, 2], &hp).unwrap();
        assert_eq!(d.d_vec, vec![4.0 * 2.25, 0.0, 0.0, 0.0]);
    }

    fn fbm_bases(shape: &[usize]) -> (Vec<GramMatrix>, Vec<EigenBasis>) {
        let grams: Vec<GramMatrix> = shape
            .iter()
            .map(|&n| {
                let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + 1.0]).collect();
                gram(&KernelSpec::fbm(1.0, 0.4).centred().squared(), &pts).unwrap()
            })
            .collect();
        let bases = grams.iter().map(|g| eigendecompose_centred(g).unwrap()).collect();
        (grams, bases)
    }

    #[test]
    fn diagonal_matches_dense_congruence() {
        let shape = [3, 4];
        let (grams, bases) = fbm_bases(&shape);
        let hp = HyperParams::new(1.3, vec![0.8, 1.7], 0.5);
        let tc = TermCollection::saturated(2);
        let dense = assemble_dense_gram(&tc, &grams, &hp).unwrap();
        let q = dense_kron_all(&[bases[0].q.clone(), bases[1].q.clone()]);
        let congruence = q.transpose() * &dense * &q;
        let d = assemble_model_diagonal(&tc, &bases, &shape, &hp).unwrap();
        let scale = d.d_vec.iter().copied().fold(0.0, f64::max);
        for i in 0..12 {
            assert!((congruence[(i, i)] - d.d_vec[i]).abs() <= 1e-9 * scale);
        }
        let fast = TermDiagonals::new(&tc, &bases).unwrap().assemble(&hp);
        for (a, b) in fast.d_vec.iter().zip(&d.d_vec) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_marginal(&ModelDiagonal { d_vec: vec![0.0; 3] }, 1.0), 0.0);
        let v = logdet_marginal(&ModelDiagonal { d_vec: vec![1.0, 2.0, 3.0] }, 1.0);
        assert_relative_eq!(v, 24f64.ln(), epsilon = 1e-14);
        assert!((v - 3.178054).abs() < 1e-6);
    }

    #[test]
    fn solve_examples() {
        let (_, bases) = fbm_bases(&[2, 3]);
        let zero = ModelDiagonal { d_vec: vec![0.0; 6] };
        let v = vec![1.0, -2.0, 0.5, 3.0, 0.1, -0.7];
        let out = solve_marginal(&bases, &zero, 1.0, &v).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        let d = assemble_model_diagonal(&TermCollection::saturated(2), &bases, &[2, 3], &HyperParams::ones(2)).unwrap();
        assert_eq!(solve_marginal(&bases, &d, 0.3, &[0.0; 6]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn solve_residual_against_dense() {
        let shape = [3, 4];
        let (grams, bases) = fbm_bases(&shape);
        let hp = HyperParams::new(0.9, vec![1.2, 0.6], 0.4);
        let tc = TermCollection::saturated(2);
        let d = assemble_model_diagonal(&tc, &bases, &shape, &hp).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let x = solve_marginal(&bases, &d, hp.sigma2(), &v).unwrap();
        let k = assemble_dense_gram(&tc, &grams, &hp).unwrap() + DMatrix::identity(12, 12) * hp.sigma2();
        let r = &k * DVector::from_vec(x) - DVector::from_vec(v.clone());
        assert!(r.norm() <= 1e-8 * DVector::from_vec(v).norm());
        let kv = structured_multiply(&bases, &d, &[1.0; 12]).unwrap();
        let want = (k - DMatrix::identity(12, 12) * hp.sigma2()) * DVector::from_element(12, 1.0);
        for (a, b) in kv.iter().zip(want.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn centred_eigenbasis_invariants(seed in any::<u64>(), n in 2usize..20, rank_frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rank = ((n - 1) as f64 * rank_frac).round() as usize;
            let kc = random_centred(&mut rng, n, rank.max(1));
            let b = eigendecompose_centred(&kc).unwrap();
            let qtq = b.q.transpose() * &b.q;
            prop_assert!((qtq - DMatrix::identity(n, n)).abs().max() <= 1e-10);
            let rec = &b.q * DMatrix::from_diagonal(&DVector::from_vec(b.lam.clone())) * b.q.transpose();
            prop_assert!((rec - &kc.values).abs().max() <= 1e-9 * b.lambda_max().max(f64::MIN_POSITIVE));
            prop_assert_eq!(b.lam[0], 0.0);
            prop_assert!(b.lam.iter().all(|&l| l >= 0.0));
            let c = 1.0 / (n as f64).sqrt();
            prop_assert!((0..n).all(|i| (b.q[(i, 0)] - c).abs() <= 1e-12));
        }

        #[test]
        fn congruence_identity(seed in any::<u64>(), n1 in 1usize..5, n2 in 1usize..5, which in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grams = vec![random_centred(&mut rng, n1, n1), random_centred(&mut rng, n2, n2)];
            let bases: Vec<EigenBasis> = grams.iter().map(|g| eigendecompose_centred(g).unwrap()).collect();
            let tc = [TermCollection::main_effects(2), TermCollection::saturated(2), TermCollection::tensor_only(2)][which].clone();
            let hp = HyperParams::new(rng.random_range(0.5..2.0), vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)], 1.0);
            let dense = assemble_dense_gram(&tc, &grams, &hp).unwrap();
            let d = assemble_model_diagonal(&tc, &bases, &[n1, n2], &hp).unwrap();
            let q = dense_kron_all(&[bases[0].q.clone(), bases[1].q.clone()]);
            let rec = &q * DMatrix::from_diagonal(&DVector::from_vec(d.d_vec.clone())) * q.transpose();
            prop_assert!((rec - &dense).norm() <= 1e-8 * dense.norm().max(1e-300));
            prop_assert!(d.d_vec.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn kron_matvec_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fs: Vec<DMatrix<f64>> = [2, 3, 2].iter().map(|&n| random_matrix(&mut rng, n, n)).collect();
            let u: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
            let lhs = kron_matvec(&fs, &comb).unwrap();
            let fu = kron_matvec(&fs, &u).unwrap();
            let fv = kron_matvec(&fs, &v).unwrap();
            for i in 0..12 {
                prop_assert!((lhs[i] - (a * fu[i] + fv[i])).abs() <= 1e-12 * (1.0 + lhs[i].abs()));
            }
        }
    }
}
