//! Dense symmetric eigensolvers, SVD, subspace distances and the
//! perturbation bounds used as runtime diagnostics.
//!
//! Every decomposition returned from this module follows one sign
//! convention: the largest-magnitude entry of each eigenvector (or left
//! singular vector) is positive, with ties going to the lowest index.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FarmError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SYMMETRY_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-8;
const TOP_K_TOL: f64 = 1e-10;
const TOP_K_MAX_ITERS: usize = 10_000;

/// Eigenvalues with unit-norm eigenvectors stored column-wise.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vector,
    pub vectors: Matrix,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Basis spanned by the first `k` eigenvectors.
    pub fn leading_basis(&self, k: usize) -> Result<SubspaceBasis> {
        if k > self.vectors.ncols() {
            return Err(FarmError::dim(format!(
                "asked for {k} vectors from a system of {}",
                self.vectors.ncols()
            )));
        }
        SubspaceBasis::new(self.vectors.columns(0, k).into_owned())
    }
}

/// Thin singular value decomposition `L = left * diag(singular_values) * rightᵀ`.
#[derive(Debug, Clone)]
pub struct SvdSystem {
    pub singular_values: Vector,
    pub left: Matrix,
    pub right: Matrix,
}

impl SvdSystem {
    /// Best rank-`k` approximation `U_k Σ_k V_kᵀ`.
    pub fn truncated(&self, k: usize) -> Matrix {
        let k = k.min(self.singular_values.len());
        let u = self.left.columns(0, k);
        let v = self.right.columns(0, k);
        let mut us = u.into_owned();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        us * v.transpose()
    }
}

/// Column-orthonormal basis of a `dim`-dimensional subspace.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    basis: Matrix,
}

impl SubspaceBasis {
    pub fn new(basis: Matrix) -> Result<Self> {
        check_finite(&basis, "subspace basis")?;
        let gram = basis.transpose() * &basis;
        let k = basis.ncols();
        let err = (gram - Matrix::identity(k, k)).abs().max();
        if k > 0 && err > ORTHONORMAL_TOL {
            return Err(FarmError::pre(format!(
                "basis columns are not orthonormal (deviation {err:e})"
            )));
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes the columns of `m` (which must have full column rank).
    pub fn span_of(m: &Matrix) -> Result<Self> {
        if m.ncols() > m.nrows() {
            return Err(FarmError::dim("more columns than rows"));
        }
        let q = m.clone().qr().q();
        Self::new(q)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_inner(self) -> Matrix {
        self.basis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceNorm {
    Spectral,
    Frobenius,
}

pub(crate) fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FarmError::NonFinite(what))
    }
}

pub(crate) fn check_square(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(FarmError::dim(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Square, finite and symmetric within `1e-10` relative to the largest entry.
pub fn check_symmetric(a: &Matrix) -> Result<()> {
    check_square(a)?;
    check_finite(a, "symmetric input")?;
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(FarmError::NotSymmetric { asymmetry: worst });
    }
    Ok(())
}

fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Flips `v` so its largest-magnitude entry is positive. Entries within a
/// relative `1e-12` of the maximum count as ties; the lowest index wins.
/// Returns whether the vector was flipped.
pub(crate) fn canonical_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let max = v.amax();
    if max == 0.0 {
        return false;
    }
    let cutoff = max * (1.0 - 1e-12);
    let pivot = v.iter().position(|x| x.abs() >= cutoff).unwrap_or(0);
    if v[pivot] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

fn canonicalize_columns(m: &mut Matrix) {
    for j in 0..m.ncols() {
        canonical_sign(m.column_mut(j));
    }
}

/// Full symmetric eigendecomposition, eigenvalues in descending order.
pub fn eig_sym(a: &Matrix) -> Result<EigenSystem> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenSystem {
            values: Vector::zeros(0),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    canonicalize_columns(&mut vectors);
    Ok(EigenSystem { values, vectors })
}

/// Indices of the `k` eigenvalues largest in absolute value, ties by position.
fn top_by_magnitude(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs()).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

fn select_pairs(values: &Vector, vectors: &Matrix, idx: &[usize]) -> EigenSystem {
    let vals = Vector::from_iterator(idx.len(), idx.iter().map(|&i| values[i]));
    let mut vecs = vectors.select_columns(idx.iter());
    canonicalize_columns(&mut vecs);
    EigenSystem {
        values: vals,
        vectors: vecs,
    }
}

/// Top-`k` eigenpairs by absolute value, via block power iteration with
/// Rayleigh-Ritz extraction. The start block is drawn from `seed`.
///
/// The iteration block carries a few extra columns beyond `k`; when that
/// covers the whole space the dense solver is used directly.
pub fn eig_top_k(a: &Matrix, k: usize, seed: u64) -> Result<EigenSystem> {
    check_symmetric(a)?;
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(FarmError::param(format!("k = {k} must lie in [1, {n}]")));
    }
    let block = (k + k.max(8)).min(n);
    if block == n {
        let full = eig_sym(a)?;
        let idx = top_by_magnitude(full.values.as_slice(), k);
        return Ok(select_pairs(&full.values, &full.vectors, &idx));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Matrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    subspace_iteration(&symmetrize(a), k, start)
}

/// Block power iteration from an explicit starting block (at least `k`
/// columns). Used for warm starts in the leave-one-out diagnostics.
pub(crate) fn subspace_iteration(a: &Matrix, k: usize, start: Matrix) -> Result<EigenSystem> {
    let mut q = start.qr().q();
    let mut residual = f64::INFINITY;
    for _ in 0..TOP_K_MAX_ITERS {
        let z = a * &q;
        let h = symmetrize(&(q.transpose() * &z));
        let small = h.symmetric_eigen();
        let idx = top_by_magnitude(small.eigenvalues.as_slice(), k);
        let s = small.eigenvectors.select_columns(idx.iter());
        let theta: Vec<f64> = idx.iter().map(|&i| small.eigenvalues[i]).collect();
        let y = &q * &s;
        let mut r = &z * &s;
        for (j, t) in theta.iter().enumerate() {
            let mut col = r.column_mut(j);
            col.axpy(-t, &y.column(j), 1.0);
        }
        let scale = small.eigenvalues.amax();
        residual = r.norm();
        if residual <= TOP_K_TOL * scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
            let mut vectors = y;
            canonicalize_columns(&mut vectors);
            return Ok(EigenSystem {
                values: Vector::from_vec(theta),
                vectors,
            });
        }
        q = z.qr().q();
    }
    Err(FarmError::Convergence {
        what: "block power iteration",
        iterations: TOP_K_MAX_ITERS,
        residual,
    })
}

/// Thin SVD with singular values in descending order.
pub fn svd(l: &Matrix) -> Result<SvdSystem> {
    check_finite(l, "svd input")?;
    let (m, n) = l.shape();
    let r = m.min(n);
    if r == 0 {
        return Ok(SvdSystem {
            singular_values: Vector::zeros(0),
            left: Matrix::zeros(m, 0),
            right: Matrix::zeros(n, 0),
        });
    }
    let dec = l.clone().svd(true, true);
    let u = dec.u.expect("left vectors requested");
    let vt = dec.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let singular_values = Vector::from_iterator(r, order.iter().map(|&i| dec.singular_values[i]));
    let mut left = u.select_columns(order.iter());
    let mut right = vt.transpose().select_columns(order.iter());
    for j in 0..r {
        if canonical_sign(left.column_mut(j)) {
            right.column_mut(j).neg_mut();
        }
    }
    Ok(SvdSystem {
        singular_values,
        left,
        right,
    })
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    symmetrize(a).symmetric_eigenvalues().amax()
}

fn same_shape(s1: &SubspaceBasis, s2: &SubspaceBasis) -> Result<()> {
    if s1.ambient_dim() != s2.ambient_dim() || s1.dim() != s2.dim() {
        return Err(FarmError::dim(format!(
            "subspaces {}x{} and {}x{}",
            s1.ambient_dim(),
            s1.dim(),
            s2.ambient_dim(),
            s2.dim()
        )));
    }
    Ok(())
}

/// Norm of the sines of the canonical angles between two subspaces.
///
/// Evaluated as `‖(I − V₁V₁ᵀ)V₂‖`, which avoids the cancellation of
/// `sqrt(1 − cos²)` for nearly aligned subspaces.
pub fn sin_theta(s1: &SubspaceBasis, s2: &SubspaceBasis, norm: SubspaceNorm) -> Result<f64> {
    same_shape(s1, s2)?;
    if s1.dim() == 0 {
        return Ok(0.0);
    }
    let v1 = s1.basis();
    let v2 = s2.basis();
    let resid = v2 - v1 * (v1.transpose() * v2);
    Ok(match norm {
        SubspaceNorm::Spectral => spectral_norm(&resid).min(1.0),
        SubspaceNorm::Frobenius => resid.norm(),
    })
}

/// Orthogonal `R` minimizing `‖Ṽ R − V‖_F`.
pub fn best_rotation(v_tilde: &SubspaceBasis, v: &SubspaceBasis) -> Result<Matrix> {
    same_shape(v_tilde, v)?;
    let cross = v_tilde.basis().transpose() * v.basis();
    let dec = svd(&cross)?;
    Ok(&dec.left * dec.right.transpose())
}

/// `2‖Ã − A‖₂ / δ₀`, where `δ₀ = λ_k(A) − λ_{k+1}(A)` separates the top-`k`
/// eigenvalues of `A` from the rest.
pub fn davis_kahan_bound(a: &Matrix, a_tilde: &Matrix, k: usize) -> Result<f64> {
    check_symmetric(a)?;
    check_symmetric(a_tilde)?;
    if a.shape() != a_tilde.shape() {
        return Err(FarmError::dim("A and Ã differ in size"));
    }
    let n = a.nrows();
    if k == 0 || k >= n {
        return Err(FarmError::param(format!("k = {k} must lie in [1, {})", n)));
    }
    let eig = eig_sym(a)?;
    let gap = eig.values[k - 1] - eig.values[k];
    if gap <= 0.0 {
        return Err(FarmError::DegenerateGap { gap });
    }
    Ok(2.0 * sym_spectral_norm(&(a_tilde - a)) / gap)
}

/// Weyl's inequality `max_j |λ_j(Ã) − λ_j(A)| ≤ ‖Ã − A‖₂`, evaluated with a
/// `1e-8` slack. Always true for valid input.
pub fn weyl_check(a: &Matrix, a_tilde: &Matrix) -> Result<bool> {
    if a.shape() != a_tilde.shape() {
        return Err(FarmError::dim("A and Ã differ in size"));
    }
    let ea = eig_sym(a)?;
    let eb = eig_sym(a_tilde)?;
    let shift = (&ea.values - &eb.values).amax();
    Ok(shift <= sym_spectral_norm(&(a_tilde - a)) + 1e-8)
}

/// Both sides of the entry-wise eigenvector perturbation bound for one
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntrywiseBound {
    pub lhs: f64,
    pub rhs: f64,
}

/// Shared setup for the entry-wise bound: the rank-`K` structure of `A`,
/// its eigen-gap at `ell`, and the perturbed eigenvector.
struct EntrywiseSetup {
    rank: usize,
    v: Matrix,
    gap: f64,
    w_norm: f64,
    v_tilde_ell: Vector,
    v_tilde_block: Matrix,
}

/// Top-`k` eigenpairs by magnitude, re-sorted by algebraic value, descending.
fn magnitude_top_sorted(values: &Vector, vectors: &Matrix, k: usize) -> (Vec<f64>, Matrix) {
    let mut idx = top_by_magnitude(values.as_slice(), k);
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let vals = idx.iter().map(|&i| values[i]).collect();
    (vals, vectors.select_columns(idx.iter()))
}

fn entrywise_setup(a: &Matrix, w: &Matrix, ell: usize) -> Result<EntrywiseSetup> {
    check_symmetric(a)?;
    check_symmetric(w)?;
    if a.shape() != w.shape() {
        return Err(FarmError::dim("A and W differ in size"));
    }
    let ea = eig_sym(a)?;
    let scale = ea.values.amax();
    if scale == 0.0 {
        return Err(FarmError::pre("A must have rank at least one"));
    }
    let rank = ea
        .values
        .iter()
        .filter(|l| l.abs() > 1e-10 * scale)
        .count();
    if ell >= rank {
        return Err(FarmError::param(format!(
            "eigen index {ell} out of range for rank {rank}"
        )));
    }
    let (lambda, v) = magnitude_top_sorted(&ea.values, &ea.vectors, rank);
    let prev = if ell == 0 { f64::INFINITY } else { lambda[ell - 1] - lambda[ell] };
    let next = if ell + 1 == rank { f64::INFINITY } else { lambda[ell] - lambda[ell + 1] };
    let gap = prev.min(next).min(lambda[ell].abs());
    let w_norm = sym_spectral_norm(w);
    if gap < 5.0 * w_norm {
        return Err(FarmError::pre(format!(
            "eigen-gap {gap:e} is below 5‖W‖₂ = {:e}",
            5.0 * w_norm
        )));
    }
    let max_abs = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if 4.0 * lambda[ell].abs() < max_abs {
        return Err(FarmError::pre(
            "|λ_ℓ| is not within a factor 4 of the largest eigenvalue",
        ));
    }
    let et = eig_sym(&(a + w))?;
    let (_, vt) = magnitude_top_sorted(&et.values, &et.vectors, rank);
    let mut v_tilde_ell = vt.column(ell).into_owned();
    if v_tilde_ell.dot(&v.column(ell)) < 0.0 {
        v_tilde_ell.neg_mut();
    }
    Ok(EntrywiseSetup {
        rank,
        v,
        gap,
        w_norm,
        v_tilde_ell,
        v_tilde_block: vt,
    })
}

fn leave_one_out(w: &Matrix, m: usize) -> Matrix {
    let mut wm = w.clone();
    wm.row_mut(m).fill(0.0);
    wm.column_mut(m).fill(0.0);
    wm
}

fn entry_bound(setup: &EntrywiseSetup, v_ell: &Vector, w: &Matrix, m: usize, loo: &Vector) -> EntrywiseBound {
    let lhs = (setup.v_tilde_ell[m] - v_ell[m]).abs();
    let coherence = setup.v.row(m).norm();
    let coupling = w.column(m).dot(loo).abs();
    EntrywiseBound {
        lhs,
        rhs: (setup.w_norm * coherence + coupling) / setup.gap,
    }
}

/// Entry-wise perturbation of the `ell`-th (0-based) leading eigenvector of
/// the rank-`K` matrix `A` under the symmetric perturbation `W`, at
/// coordinate `m`.
///
/// `lhs = |[ṽ_ℓ − v_ℓ]_m|` after aligning the sign of `ṽ_ℓ` with `v_ℓ`;
/// `rhs = (‖W‖₂/δ_ℓ)‖V_{m·}‖₂ + |⟨w_m, ṽ_ℓ^{(m)}⟩|/δ_ℓ`, where `ṽ_ℓ^{(m)}`
/// comes from `A + W^{(m)}` with row and column `m` of `W` zeroed.
pub fn entrywise_pert_bound(a: &Matrix, w: &Matrix, ell: usize, m: usize) -> Result<EntrywiseBound> {
    if m >= a.nrows() {
        return Err(FarmError::param(format!("coordinate {m} out of range")));
    }
    let setup = entrywise_setup(a, w, ell)?;
    let loo = eig_sym(&(a + leave_one_out(w, m)))?;
    let (_, loo_v) = magnitude_top_sorted(&loo.values, &loo.vectors, setup.rank);
    let v_ell = setup.v.column(ell).into_owned();
    Ok(entry_bound(&setup, &v_ell, w, m, &loo_v.column(ell).into_owned()))
}

/// [`entrywise_pert_bound`] for every coordinate. The leave-one-out
/// eigenvectors come from block power iteration warm-started at the
/// perturbed eigenvectors.
pub fn entrywise_pert_bounds(a: &Matrix, w: &Matrix, ell: usize) -> Result<Vec<EntrywiseBound>> {
    let setup = entrywise_setup(a, w, ell)?;
    let v_ell = setup.v.column(ell).into_owned();
    let n = a.nrows();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let perturbed = symmetrize(&(a + leave_one_out(w, m)));
        let sys = subspace_iteration(&perturbed, setup.rank, setup.v_tilde_block.clone())?;
        let (_, loo_v) = magnitude_top_sorted(&sys.values, &sys.vectors, setup.rank);
        out.push(entry_bound(&setup, &v_ell, w, m, &loo_v.column(ell).into_owned()));
    }
    Ok(out)
}

/// Symmetric dilation `[[0, L], [Lᵀ, 0]]`.
pub fn dilate(l: &Matrix) -> Matrix {
    let (n, p) = l.shape();
    let mut d = Matrix::zeros(n + p, n + p);
    d.view_mut((0, n), (n, p)).copy_from(l);
    d.view_mut((n, 0), (p, n)).copy_from(&l.transpose());
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym_random(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        symmetrize(&g)
    }

    fn basis(cols: &[&[f64]]) -> SubspaceBasis {
        let n = cols[0].len();
        SubspaceBasis::new(Matrix::from_fn(n, cols.len(), |i, j| cols[j][i])).unwrap()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_sym(&Matrix::identity(2, 2)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
        assert!((e.vectors.clone() - Matrix::identity(2, 2)).amax() < 1e-12);

        let e = eig_sym(&Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0]))).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 1.0]);
        assert!((e.vectors[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = eig_sym(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - h).abs() < 1e-12 && (e.vectors[(1, 0)] - h).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - h).abs() < 1e-12 && (e.vectors[(1, 1)] + h).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(eig_sym(&rect), Err(FarmError::Dimension(_))));
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eig_sym(&asym), Err(FarmError::NotSymmetric { .. })));
    }

    #[test]
    fn eig_reconstructs() {
        let a = sym_random(30, 4);
        let e = eig_sym(&a).unwrap();
        let mut rec = Matrix::zeros(30, 30);
        for k in 0..30 {
            let v = e.vectors.column(k);
            rec += e.values[k] * &v * v.transpose();
        }
        assert!((rec - &a).norm() <= 1e-8 * a.norm());
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - Matrix::identity(30, 30)).amax() < 1e-8);
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn top_k_magnitude_ordering() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 2.0, 1.0]));
        let e = eig_top_k(&d, 1, 0).unwrap();
        assert_eq!(e.values[0], 5.0);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-12);

        let d = Matrix::from_diagonal(&Vector::from_vec(vec![-5.0, 2.0, 1.0]));
        let e = eig_top_k(&d, 1, 0).unwrap();
        assert_eq!(e.values[0], -5.0);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_matches_dense_solver() {
        for seed in 0..5 {
            let a = sym_random(50, 100 + seed);
            let full = eig_sym(&a).unwrap();
            let idx = top_by_magnitude(full.values.as_slice(), 3);
            let dense = SubspaceBasis::new(full.vectors.select_columns(idx.iter())).unwrap();
            let e = eig_top_k(&a, 3, seed).unwrap();
            let iter = SubspaceBasis::new(e.vectors.clone()).unwrap();
            assert!(sin_theta(&dense, &iter, SubspaceNorm::Spectral).unwrap() < 1e-6);
        }
    }

    #[test]
    fn top_k_large_block_path() {
        // 80x80 forces the iterative path (block 11 < 80).
        let mut a = sym_random(80, 9) * 0.1;
        for i in 0..3 {
            a[(i, i)] += 10.0 * (3 - i) as f64;
        }
        let e = eig_top_k(&a, 3, 1).unwrap();
        let full = eig_sym(&a).unwrap();
        for k in 0..3 {
            assert!((e.values[k] - full.values[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn svd_examples() {
        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert!(z.singular_values.iter().all(|&s| s == 0.0));

        let d = svd(&Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert_eq!(d.singular_values.as_slice(), &[2.0, 1.0]);
        assert!((d.left.clone() - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!((d.right.clone() - Matrix::identity(2, 2)).amax() < 1e-12);

        let a = Vector::from_vec(vec![0.6, 0.8, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let s = svd(&(&a * b.transpose())).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-12);
        assert!(s.singular_values.iter().skip(1).all(|&v| v <= 1e-10));
    }

    #[test]
    fn svd_reconstructs_wide_and_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(7, 4), (4, 7)] {
            let l = Matrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
            let s = svd(&l).unwrap();
            let r = s.truncated(m.min(n));
            assert!((r - &l).amax() <= 1e-8 * (1.0 + s.singular_values[0]));
        }
    }

    #[test]
    fn sin_theta_examples() {
        let e1 = basis(&[&[1.0, 0.0]]);
        let e2 = basis(&[&[0.0, 1.0]]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let diag = basis(&[&[h, h]]);
        assert_eq!(sin_theta(&e1, &e1, SubspaceNorm::Spectral).unwrap(), 0.0);
        assert!((sin_theta(&e1, &e2, SubspaceNorm::Spectral).unwrap() - 1.0).abs() < 1e-12);
        assert!((sin_theta(&e1, &diag, SubspaceNorm::Spectral).unwrap() - h).abs() < 1e-12);
        assert!((sin_theta(&e1, &diag, SubspaceNorm::Frobenius).unwrap() - h).abs() < 1e-12);
        let three = basis(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            sin_theta(&e1, &three, SubspaceNorm::Spectral),
            Err(FarmError::Dimension(_))
        ));
    }

    #[test]
    fn sin_theta_frobenius_matches_projector_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Matrix::from_fn(8, 3, |_, _| StandardNormal.sample(&mut rng));
        let b = Matrix::from_fn(8, 3, |_, _| StandardNormal.sample(&mut rng));
        let sa = SubspaceBasis::span_of(&a).unwrap();
        let sb = SubspaceBasis::span_of(&b).unwrap();
        let pa = sa.basis() * sa.basis().transpose();
        let pb = sb.basis() * sb.basis().transpose();
        let d_f = (&pa - &pb).norm();
        let d_2 = spectral_norm(&(&pa - &pb));
        let f = sin_theta(&sa, &sb, SubspaceNorm::Frobenius).unwrap();
        let s = sin_theta(&sa, &sb, SubspaceNorm::Spectral).unwrap();
        assert!((f - d_f / 2f64.sqrt()).abs() < 1e-10);
        assert!((s - d_2).abs() < 1e-10);
    }

    #[test]
    fn best_rotation_examples() {
        let v = basis(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let r = best_rotation(&v, &v).unwrap();
        assert!((r - Matrix::identity(2, 2)).amax() < 1e-12);

        let swapped = basis(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
        let r = best_rotation(&swapped, &v).unwrap();
        let perm = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((r - perm).amax() < 1e-12);
    }

    #[test]
    fn best_rotation_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = Matrix::from_fn(6, 2, |_, _| StandardNormal.sample(&mut rng));
            let b = Matrix::from_fn(6, 2, |_, _| StandardNormal.sample(&mut rng));
            let vt = SubspaceBasis::span_of(&a).unwrap();
            let v = SubspaceBasis::span_of(&b).unwrap();
            let r = best_rotation(&vt, &v).unwrap();
            let dist = (vt.basis() * &r - v.basis()).norm();
            let sf = sin_theta(&vt, &v, SubspaceNorm::Frobenius).unwrap();
            assert!(sf <= dist + 1e-12);
            assert!(dist <= 2f64.sqrt() * sf + 1e-12);
        }
    }

    #[test]
    fn davis_kahan_examples() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0]));
        assert_eq!(davis_kahan_bound(&a, &a, 1).unwrap(), 0.0);
        let at = Matrix::from_diagonal(&Vector::from_vec(vec![3.1, 1.0]));
        assert!((davis_kahan_bound(&a, &at, 1).unwrap() - 0.1).abs() < 1e-12);
        let flat = Matrix::identity(2, 2);
        assert!(matches!(
            davis_kahan_bound(&flat, &at, 1),
            Err(FarmError::DegenerateGap { .. })
        ));
    }

    #[test]
    fn weyl_examples() {
        let a = sym_random(5, 1);
        assert!(weyl_check(&a, &a).unwrap());
        let zero = Matrix::zeros(2, 2);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(weyl_check(&zero, &d).unwrap());
    }

    #[test]
    fn entrywise_zero_perturbation() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 0)] = 10.0;
        let b = entrywise_pert_bound(&a, &Matrix::zeros(3, 3), 0, 1).unwrap();
        assert_eq!(b.lhs, 0.0);
        assert_eq!(b.rhs, 0.0);
    }

    #[test]
    fn entrywise_block_structure() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 0)] = 10.0;
        let mut w = Matrix::zeros(3, 3);
        w[(1, 2)] = 0.1;
        w[(2, 1)] = 0.1;
        let b = entrywise_pert_bound(&a, &w, 0, 0).unwrap();
        assert!(b.lhs.abs() < 1e-14);
    }

    #[test]
    fn entrywise_gap_condition() {
        let mut a = Matrix::zeros(3, 3);
        a[(0, 0)] = 1.0;
        let w = Matrix::from_element(3, 3, 0.5);
        assert!(matches!(
            entrywise_pert_bound(&a, &w, 0, 0),
            Err(FarmError::Precondition(_))
        ));
    }

    #[test]
    fn entrywise_batch_matches_single() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = SubspaceBasis::span_of(&Matrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng)))
            .unwrap()
            .into_inner();
        let lam = Matrix::from_diagonal(&Vector::from_vec(vec![60.0, 30.0]));
        let a = &u * lam * u.transpose();
        let w = sym_random(n, 22) * 0.3;
        let all = entrywise_pert_bounds(&a, &w, 1).unwrap();
        for m in [0, 7, 39] {
            let one = entrywise_pert_bound(&a, &w, 1, m).unwrap();
            assert!((one.lhs - all[m].lhs).abs() < 1e-9);
            assert!((one.rhs - all[m].rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn dilation_spectrum() {
        let e = eig_sym(&dilate(&Matrix::from_element(1, 1, 2.0))).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, -2.0]);

        let l = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0]));
        let e = eig_sym(&dilate(&l)).unwrap();
        let expect = [3.0, 1.0, -1.0, -3.0];
        for (a, b) in e.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(dilate(&Matrix::zeros(2, 3)), Matrix::zeros(5, 5));
    }

    #[test]
    fn dilation_blocks_recover_singular_subspaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, p, k) = (9, 6, 2);
        let l = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let s = svd(&l).unwrap();
        let e = eig_sym(&dilate(&l)).unwrap();
        let top = e.vectors.columns(0, k);
        let left = SubspaceBasis::span_of(&top.rows(0, n).into_owned()).unwrap();
        let right = SubspaceBasis::span_of(&top.rows(n, p).into_owned()).unwrap();
        let u = SubspaceBasis::new(s.left.columns(0, k).into_owned()).unwrap();
        let v = SubspaceBasis::new(s.right.columns(0, k).into_owned()).unwrap();
        assert!(sin_theta(&left, &u, SubspaceNorm::Spectral).unwrap() < 1e-8);
        assert!(sin_theta(&right, &v, SubspaceNorm::Spectral).unwrap() < 1e-8);
        for k in 0..p {
            assert!((e.values[k] + e.values[n + p - 1 - k]).abs() < 1e-10);
        }
    }
}
