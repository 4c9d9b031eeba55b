//! Spectral estimators for community detection, matrix completion and
//! phase synchronization.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, check_symmetric, eig_top_k, svd, EigenSystem, Matrix, Vector};

pub type CMatrix = DMatrix<Complex<f64>>;
pub type CVector = DVector<Complex<f64>>;

pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_ITERS: usize = 100;
const PHASE_MAX_ITERS: usize = 10_000;
const PHASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SbmInstance {
    pub adjacency: Matrix,
    pub k: usize,
    pub truth: Option<Vec<usize>>,
}

impl SbmInstance {
    pub fn new(adjacency: Matrix, k: usize, truth: Option<Vec<usize>>) -> Result<Self> {
        check_adjacency(&adjacency)?;
        if let Some(t) = &truth {
            if t.len() != adjacency.nrows() {
                return Err(FarmError::dim("label vector length differs from node count"));
            }
        }
        Ok(Self { adjacency, k, truth })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }
}

fn check_adjacency(a: &Matrix) -> Result<()> {
    check_symmetric(a)?;
    if a.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(FarmError::pre("adjacency entries must be 0 or 1"));
    }
    Ok(())
}

/// Top-two eigenpairs of a symmetric matrix in algebraic order.
fn top_two_algebraic(a: &Matrix, seed: u64) -> Result<EigenSystem> {
    let eig = eig_top_k(a, 2, seed)?;
    // When both magnitude-leading eigenvalues are positive, every other
    // eigenvalue lies below them.
    let sorted = |e: EigenSystem| {
        if e.values[0] >= e.values[1] {
            e
        } else {
            EigenSystem {
                values: Vector::from_vec(vec![e.values[1], e.values[0]]),
                vectors: e.vectors.select_columns([1, 0].iter()),
            }
        }
    };
    if eig.values.iter().all(|&v| v > 0.0) {
        return Ok(sorted(eig));
    }
    let shift = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let shifted = a + Matrix::identity(a.nrows(), a.ncols()) * shift;
    let mut eig = sorted(eig_top_k(&shifted, 2, seed)?);
    eig.values.add_scalar_mut(-shift);
    Ok(eig)
}

/// Community labels in `0..K` from the adjacency matrix.
///
/// For `K = 2` the labels are the sign pattern of the eigenvector of the
/// second largest eigenvalue; when the top two eigenvalues coincide that
/// vector is not identified and k-means on the top-two eigenvectors is used
/// instead. For `K > 2`, k-means on the rows of the top-`K` eigenvectors.
pub fn sbm_spectral(a: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_adjacency(a)?;
    let n = a.nrows();
    if k < 2 {
        return Err(FarmError::param(format!("K = {k} must be at least 2")));
    }
    if n < k {
        return Err(FarmError::InsufficientSamples { needed: k, got: n });
    }
    if k == 2 {
        let eig = top_two_algebraic(a, seed)?;
        let gap = eig.values[0] - eig.values[1];
        if gap > 1e-8 * eig.values[0].abs().max(1.0) {
            return Ok(eig.vectors.column(1).iter().map(|&v| usize::from(v < 0.0)).collect());
        }
        return kmeans(&eig.vectors, 2, seed).map(|c| c.labels);
    }
    let eig = eig_top_k(a, k, seed)?;
    kmeans(&eig.vectors, k, seed).map(|c| c.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryRegime {
    Below,
    Critical,
    Above,
}

/// Compares `√a − √b` with `√2` for edge probabilities `a log n / n` and
/// `b log n / n`.
pub fn sbm_exact_recovery_threshold(a: f64, b: f64) -> Result<RecoveryRegime> {
    if !(b > 0.0) || !(a > b) || !a.is_finite() {
        return Err(FarmError::pre(format!("need a > b > 0, got a = {a}, b = {b}")));
    }
    let d = a.sqrt() - b.sqrt() - std::f64::consts::SQRT_2;
    Ok(if d.abs() <= 1e-12 {
        RecoveryRegime::Critical
    } else if d > 0.0 {
        RecoveryRegime::Above
    } else {
        RecoveryRegime::Below
    })
}

/// Fraction of nodes labelled correctly, maximized over relabelings.
pub fn label_agreement(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(FarmError::dim("label vectors differ in length"));
    }
    if labels.is_empty() {
        return Ok(1.0);
    }
    let k = labels.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    if k > 8 {
        return Err(FarmError::param("agreement is computed for at most 8 labels"));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&l, &t) in labels.iter().zip(truth) {
        counts[l][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|i| counts[i][p[i]]).sum::<usize>());
    });
    Ok(best as f64 / labels.len() as f64)
}

fn permute(p: &mut [usize], start: usize, f: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub wcss: f64,
}

fn sq_dist(points: &Matrix, i: usize, centers: &Matrix, c: usize) -> f64 {
    (0..points.ncols()).map(|j| (points[(i, j)] - centers[(c, j)]).powi(2)).sum()
}

fn nearest(points: &Matrix, i: usize, centers: &Matrix) -> (usize, f64) {
    (0..centers.nrows())
        .map(|c| (c, sq_dist(points, i, centers, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_once(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Clustering {
    let (n, d) = points.shape();
    let mut centers = Matrix::zeros(k, d);
    centers.set_row(0, &points.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(points, i, &centers, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let (c, _) = nearest(points, i, &centers);
            if *l != c {
                *l = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += points.row(i);
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                centers.set_row(c, &(sums.row(c) / counts[c] as f64));
            }
        }
    }
    let wcss = labels.iter().enumerate().map(|(i, &l)| sq_dist(points, i, &centers, l)).sum();
    Clustering { labels, centers, wcss }
}

/// k-means++ with seeded restarts; the lowest within-cluster sum of squares
/// wins, ties going to the earliest restart. Clusters are numbered by
/// decreasing first coordinate of their centers.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<Clustering> {
    check_finite(points, "k-means input")?;
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(FarmError::param(format!("k = {k} must lie in [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..KMEANS_RESTARTS {
        let fit = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one restart");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (best.centers.row(a), best.centers.row(b));
        rb.iter()
            .zip(ra.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rename = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rename[old] = new;
    }
    for l in &mut best.labels {
        *l = rename[*l];
    }
    best.centers = best.centers.select_rows(order.iter());
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct CompletionInstance {
    /// 0/1 observation pattern.
    pub mask: Matrix,
    /// Observed values; entries off the mask are ignored.
    pub values: Matrix,
    pub k: usize,
}

impl CompletionInstance {
    pub fn new(mask: Matrix, values: Matrix, k: usize) -> Result<Self> {
        if mask.shape() != values.shape() {
            return Err(FarmError::dim("mask and values differ in shape"));
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(FarmError::pre("mask entries must be 0 or 1"));
        }
        if mask.iter().zip(values.iter()).any(|(&m, v)| m == 1.0 && !v.is_finite()) {
            return Err(FarmError::NonFinite("observed values"));
        }
        Ok(Self { mask, values, k })
    }

    /// `P_Ω(M)`: observed values, zero elsewhere.
    pub fn projected(&self) -> Matrix {
        self.mask.zip_map(&self.values, |m, v| if m == 1.0 { v } else { 0.0 })
    }

    pub fn observed_fraction(&self) -> f64 {
        self.mask.sum() / (self.mask.len().max(1)) as f64
    }
}

#[derive(Debug, Clone)]
pub struct CompletionFit {
    pub m_hat: Matrix,
    pub u: Matrix,
    pub v: Matrix,
    /// Top-`K` singular values of `P_Ω(M)`.
    pub singulars: Vector,
    pub p_hat: f64,
    pub warnings: Vec<String>,
}

/// `M̂ = p⁻¹ · (best rank-K approximation of P_Ω(M))`, with `p` the observed
/// fraction unless `known_p` is given.
pub fn spectral_complete(inst: &CompletionInstance, known_p: Option<f64>) -> Result<CompletionFit> {
    let (n1, n2) = inst.mask.shape();
    let k = inst.k;
    if k == 0 || k > n1.min(n2) {
        return Err(FarmError::param(format!("K = {k} must lie in [1, {}]", n1.min(n2))));
    }
    let mut warnings = Vec::new();
    let empty_rows = inst.mask.row_iter().filter(|r| r.sum() == 0.0).count();
    let empty_cols = inst.mask.column_iter().filter(|c| c.sum() == 0.0).count();
    if empty_rows + empty_cols > 0 {
        warnings.push(format!("{empty_rows} rows and {empty_cols} columns have no observations"));
    }
    let p_hat = match known_p {
        Some(p) if p > 0.0 && p <= 1.0 => p,
        Some(p) => return Err(FarmError::param(format!("sampling rate {p} outside (0, 1]"))),
        None => inst.observed_fraction(),
    };
    if p_hat == 0.0 {
        return Err(FarmError::pre("no observed entries"));
    }
    let dec = svd(&inst.projected())?;
    let m_hat = dec.truncated(k) / p_hat;
    Ok(CompletionFit {
        m_hat,
        u: dec.left.columns(0, k).into_owned(),
        v: dec.right.columns(0, k).into_owned(),
        singulars: dec.singular_values.rows(0, k).into_owned(),
        p_hat,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct PhaseInstance {
    pub c: CMatrix,
    pub sigma: f64,
}

impl PhaseInstance {
    pub fn new(c: CMatrix, sigma: f64) -> Result<Self> {
        check_hermitian(&c)?;
        Ok(Self { c, sigma })
    }

    /// Builds `C` from separate real and imaginary parts.
    pub fn from_parts(re: &Matrix, im: &Matrix, sigma: f64) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(FarmError::dim("real and imaginary parts differ in shape"));
        }
        Self::new(re.zip_map(im, Complex::new), sigma)
    }
}

fn check_hermitian(c: &CMatrix) -> Result<()> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(FarmError::dim(format!("{}x{} matrix is not square", n, c.ncols())));
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(FarmError::NonFinite("phase matrix"));
    }
    let scale = c.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            asymmetry = asymmetry.max((c[(i, j)] - c[(j, i)].conj()).norm());
        }
    }
    if asymmetry > 1e-10 * scale {
        return Err(FarmError::NotSymmetric { asymmetry });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PhaseFit {
    /// Leading eigenvector scaled to `‖v‖₂ = √n`.
    pub v: CVector,
    /// `v_ℓ / |v_ℓ|` entrywise.
    pub normalized: CVector,
    pub eigenvalue: f64,
    pub iterations: usize,
}

/// Rotates `v` so that its first entry of largest modulus is real positive.
fn fix_global_phase(v: &mut CVector) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let cutoff = max * (1.0 - 1e-12);
    let pivot = v.iter().position(|z| z.norm() >= cutoff).unwrap_or(0);
    let rot = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= rot);
}

/// Leading eigenvector of a Hermitian matrix by power iteration on
/// `C + sI`, where `s` bounds the spectral radius, so the algebraically
/// largest eigenvalue dominates.
pub fn phase_sync(inst: &PhaseInstance) -> Result<PhaseFit> {
    let c = &inst.c;
    check_hermitian(c)?;
    let n = c.nrows();
    if n == 0 {
        return Err(FarmError::InsufficientSamples { needed: 1, got: 0 });
    }
    let shift = c
        .row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = shift.max(f64::MIN_POSITIVE);
    let mut v = CVector::from_fn(n, |i, _| Complex::new(1.0 + 0.1 * (i as f64).sin(), 0.05 * (i as f64).cos()));
    v /= Complex::from(v.norm());
    let mut residual = f64::INFINITY;
    for it in 1..=PHASE_MAX_ITERS {
        let cv = c * &v;
        let lambda = v.dotc(&cv).re;
        residual = (&cv - &v * Complex::from(lambda)).norm();
        if residual <= PHASE_TOL * scale {
            fix_global_phase(&mut v);
            let root_n = (n as f64).sqrt();
            let v = v * Complex::from(root_n);
            let normalized = v.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex::new(1.0, 0.0) });
            return Ok(PhaseFit {
                v,
                normalized,
                eigenvalue: lambda,
                iterations: it,
            });
        }
        let next = cv + &v * Complex::from(shift);
        let norm = next.norm();
        if !(norm > 0.0) {
            break;
        }
        v = next / Complex::from(norm);
    }
    Err(FarmError::Convergence {
        what: "phase power iteration",
        iterations: PHASE_MAX_ITERS,
        residual,
    })
}

/// `(n^{-1/2}‖v − e^{iφ}z‖₂, ‖v − e^{iφ}z‖_∞)` at the phase `φ` minimizing
/// the Euclidean distance.
pub fn phase_errors(v: &CVector, z: &CVector) -> Result<(f64, f64)> {
    if v.len() != z.len() {
        return Err(FarmError::dim("phase vectors differ in length"));
    }
    let inner = z.dotc(v);
    let rot = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex::new(1.0, 0.0) };
    let diff = v - z * rot;
    let n = v.len().max(1) as f64;
    let max = diff.iter().map(|d| d.norm()).fold(0.0, f64::max);
    Ok((diff.norm() / n.sqrt(), max))
}
