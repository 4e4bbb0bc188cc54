//! Dense kernels shared by every solver.
//!
//! Samples are stored column-major as a `p x n` matrix so that the columns
//! belonging to an active set can be gathered as contiguous blocks.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns gathered per block when accumulating a subset Gram matrix.
const GRAM_BLOCK: usize = 256;

const POWER_TOL: f64 = 1e-6;
const POWER_MAX_ITERS: usize = 500;

/// Relative diagonal jitter applied when the normal equations lose rank.
const JITTER: f64 = 1e-10;

/// Design matrix with one sample `x_i` per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    inner: DMatrix<f64>,
}

impl DataMatrix {
    /// Builds a `p x n` matrix from column-major entries (column `i` is sample `i`).
    pub fn from_column_major(p: usize, n: usize, entries: Vec<f64>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "data matrix needs p >= 1 and n >= 1, got p={p}, n={n}"
            )));
        }
        if entries.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {p}x{n} matrix, got {}",
                p * n,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(
                "data matrix entries must be finite".into(),
            ));
        }
        Ok(Self {
            inner: DMatrix::from_vec(p, n, entries),
        })
    }

    /// Builds the matrix from a list of samples, each of length `p`.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let p = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != p) {
            return Err(Error::DimensionMismatch(
                "samples have differing lengths".into(),
            ));
        }
        Self::from_column_major(p, n, samples.concat())
    }

    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        let (p, n) = inner.shape();
        Self::from_column_major(p, n, inner.data.into())
    }

    /// Feature dimension.
    pub fn p(&self) -> usize {
        self.inner.nrows()
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.inner.ncols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.inner.as_slice()[i * p..(i + 1) * p]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// `X^T theta`, the noiseless responses of every sample.
    pub fn predict(&self, model: &Model) -> DVector<f64> {
        self.inner.tr_mul(&model.view())
    }

    /// View restricted to the columns in `set`.
    pub fn subset<'a>(&'a self, set: &'a ActiveSet) -> SubsetView<'a> {
        SubsetView {
            data: self,
            set: Some(set),
        }
    }

    /// View over every column.
    pub fn full(&self) -> SubsetView<'_> {
        SubsetView {
            data: self,
            set: None,
        }
    }
}

/// Dense coefficient vector of length `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Model(Vec<f64>);

impl Model {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self(coefficients)
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn from_vector(v: DVector<f64>) -> Self {
        Self(v.data.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn view(&self) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.0, self.0.len())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Model) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn nonzeros(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Strictly increasing list of sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    /// All indices `0..n`.
    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Validates that `indices` is strictly increasing and below `n`.
    pub fn from_sorted(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DimensionMismatch(
                "active set indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&last| last >= n) {
            return Err(Error::DimensionMismatch(format!(
                "active set index out of range for n={n}"
            )));
        }
        Ok(Self(indices))
    }

    /// Sorts and deduplicates arbitrary indices.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// `|self \ other|`, by a merge walk over both sorted lists.
    pub fn difference_count(&self, other: &ActiveSet) -> usize {
        let (mut a, mut b) = (0, 0);
        let mut count = 0;
        while a < self.0.len() {
            if b >= other.0.len() {
                count += self.0.len() - a;
                break;
            }
            match self.0[a].cmp(&other.0[b]) {
                std::cmp::Ordering::Less => {
                    count += 1;
                    a += 1;
                }
                std::cmp::Ordering::Equal => {
                    a += 1;
                    b += 1;
                }
                std::cmp::Ordering::Greater => b += 1,
            }
        }
        count
    }

    /// Indices in `0..n` not in this set.
    pub fn complement(&self, n: usize) -> ActiveSet {
        let mut out = Vec::with_capacity(n.saturating_sub(self.0.len()));
        let mut next = self.0.iter().peekable();
        for i in 0..n {
            if next.peek() == Some(&&i) {
                next.next();
            } else {
                out.push(i);
            }
        }
        ActiveSet(out)
    }

    /// Entries of `v` at the indices of this set.
    pub fn gather(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| v[i]).collect()
    }

    /// `||v_S||_2`.
    pub fn norm_of(&self, v: &[f64]) -> f64 {
        self.0.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
    }
}

/// Column-subset view `X_S` of a [`DataMatrix`]. A missing set means all columns.
#[derive(Debug, Clone, Copy)]
pub struct SubsetView<'a> {
    data: &'a DataMatrix,
    set: Option<&'a ActiveSet>,
}

impl<'a> SubsetView<'a> {
    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Number of columns in the view.
    pub fn len(&self) -> usize {
        self.set.map_or(self.data.n(), ActiveSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn column_index(&self, k: usize) -> usize {
        match self.set {
            Some(s) => s.indices()[k],
            None => k,
        }
    }

    fn column(&self, k: usize) -> &'a [f64] {
        self.data.sample(self.column_index(k))
    }

    /// `X_S X_S^T`, accumulated block by block.
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.p();
        let m = self.len();
        let mut gram = DMatrix::zeros(p, p);
        let mut block = Vec::with_capacity(p * GRAM_BLOCK.min(m));
        for start in (0..m).step_by(GRAM_BLOCK) {
            let end = (start + GRAM_BLOCK).min(m);
            block.clear();
            for k in start..end {
                block.extend_from_slice(self.column(k));
            }
            let b = DMatrix::from_column_slice(p, end - start, &block);
            gram.gemm(1.0, &b, &b.transpose(), 1.0);
        }
        gram
    }

    /// `X_S v` for `v` of length `|S|`.
    pub fn mul_vec(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        for (k, &vk) in v.iter().enumerate() {
            if vk != 0.0 {
                for (o, x) in out.iter_mut().zip(self.column(k)) {
                    *o += vk * x;
                }
            }
        }
        out
    }

    /// `X_S X_S^T v` in a single pass over the columns.
    pub fn gram_mul(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        for k in 0..self.len() {
            let col = self.column(k);
            let c = dot(col, v);
            for (o, x) in out.iter_mut().zip(col) {
                *o += c * x;
            }
        }
        out
    }

    /// `X_S (X_S^T theta - y_s)` in a single pass over the columns.
    pub fn normal_gradient(&self, theta: &[f64], y_s: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        for (k, yk) in y_s.iter().enumerate().take(self.len()) {
            let col = self.column(k);
            let c = dot(col, theta) - yk;
            for (o, x) in out.iter_mut().zip(col) {
                *o += c * x;
            }
        }
        out
    }

    /// `X_S^T theta`, length `|S|`.
    pub fn tr_mul_vec(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|k| dot(self.column(k), theta))
            .collect()
    }

    /// Largest squared column norm, a lower bound on `lambda_max(X_S X_S^T)`.
    pub fn max_column_norm_sq(&self) -> f64 {
        (0..self.len())
            .map(|k| dot(self.column(k), self.column(k)))
            .fold(0.0, f64::max)
    }

    /// `trace(X_S X_S^T)`, an upper bound on `lambda_max(X_S X_S^T)`.
    pub fn frobenius_sq(&self) -> f64 {
        (0..self.len())
            .map(|k| dot(self.column(k), self.column(k)))
            .sum()
    }

    /// Largest squared column norm and its position in the view.
    fn heaviest_column(&self) -> Option<usize> {
        (0..self.len())
            .map(|k| (k, dot(self.column(k), self.column(k))))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Least-squares fit `argmin_theta sum_{i in S} (y_i - <theta, x_i>)^2` via the
/// normal equations.
///
/// `y_s` holds the responses of the view's columns in order. When the Gram
/// matrix is numerically rank deficient the system is re-factored with a
/// `1e-10 * trace` diagonal jitter, and as a last resort solved with an SVD
/// pseudo-inverse.
pub fn solve_least_squares(x_s: SubsetView<'_>, y_s: &[f64]) -> Result<Model> {
    if x_s.is_empty() {
        return Err(Error::DimensionMismatch(
            "least squares needs at least one sample".into(),
        ));
    }
    if y_s.len() != x_s.len() {
        return Err(Error::DimensionMismatch(format!(
            "y_S has length {} but the view has {} columns",
            y_s.len(),
            x_s.len()
        )));
    }
    let gram = x_s.gram();
    let rhs = x_s.mul_vec(y_s);
    solve_normal_equations(gram, &rhs)
}

/// Solves `gram * theta = rhs` for a symmetric positive semi-definite `gram`.
pub fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<Model> {
    if !gram.iter().all(|v| v.is_finite()) || !rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let p = gram.nrows();
    let trace = gram.trace();
    if trace <= 0.0 {
        // X_S is identically zero; the minimum-norm solution is zero.
        return Ok(Model::zeros(p));
    }

    if let Some(theta) = cholesky_solve(gram.clone(), rhs) {
        return Ok(theta);
    }

    let mut jittered = gram.clone();
    for i in 0..p {
        jittered[(i, i)] += JITTER * trace;
    }
    if let Some(theta) = cholesky_solve(jittered, rhs) {
        return Ok(theta);
    }

    let svd = gram.svd(true, true);
    let eps = f64::EPSILON * p as f64 * svd.singular_values.max();
    let theta = svd.solve(rhs, eps).map_err(|_| Error::SingularSystem)?;
    let theta = Model::from_vector(theta);
    if theta.is_finite() {
        Ok(theta)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Cholesky solve that refuses numerically rank-deficient factors.
fn cholesky_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<Model> {
    let chol = gram.cholesky()?;
    let l = chol.l_dirty();
    let (lo, hi) = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if !(lo > 1e-13 * hi) {
        return None;
    }
    let theta = Model::from_vector(chol.solve(rhs));
    theta.is_finite().then_some(theta)
}

/// Estimate of `lambda_max(X_S X_S^T)` by Lanczos iteration, the Krylov
/// acceleration of the power method, with full reorthogonalization.
///
/// Starts from the normalized all-ones vector (or the heaviest column if that
/// start lies in the null space) and stops when the largest Ritz value
/// changes by less than `1e-6` relative, after 500 iterations, or when the
/// Krylov space is exhausted. Ritz values never exceed `lambda_max`; the
/// estimate is also never below the largest squared column norm.
pub fn spectral_norm_estimate(x_s: SubsetView<'_>) -> f64 {
    let p = x_s.p();
    let floor = x_s.max_column_norm_sq();
    if floor == 0.0 {
        return 0.0;
    }

    let mut q = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut w = x_s.gram_mul(q.as_slice());
    if w.norm() <= 1e-12 * floor {
        let k = x_s.heaviest_column().expect("non-empty view");
        q = DVector::from_column_slice(x_s.column(k));
        q /= q.norm();
        w = x_s.gram_mul(q.as_slice());
    }

    let mut basis = vec![q];
    let mut diag = vec![basis[0].dot(&w)];
    let mut off: Vec<f64> = Vec::new();
    let mut estimate = diag[0];
    for _ in 0..POWER_MAX_ITERS.min(p.saturating_sub(1)) {
        // two Gram-Schmidt passes keep the basis orthogonal to rounding
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let beta = w.norm();
        if beta <= 1e-12 * estimate {
            break;
        }
        let next = &w / beta;
        w = x_s.gram_mul(next.as_slice());
        diag.push(next.dot(&w));
        off.push(beta);
        basis.push(next);

        let top = tridiagonal_max_eigenvalue(&diag, &off);
        let change = (top - estimate).abs();
        estimate = top;
        if change <= POWER_TOL * estimate.abs() {
            break;
        }
    }
    estimate.max(floor)
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `a` and off-diagonal `b` (Sturm sequence count).
fn eigenvalues_below(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..a.len() {
        let coupling = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] / d };
        d = a[i] - x - coupling;
        if d == 0.0 {
            d = -f64::EPSILON * (a[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal matrix, by bisection.
fn tridiagonal_max_eigenvalue(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let radius = |i: usize| {
        let left = if i > 0 { b[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { b[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..n).map(|i| a[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| a[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi.abs() {
            break;
        }
        if eigenvalues_below(a, b, mid) < n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `r_i = y_i - <theta, x_i>` for every sample.
pub fn residuals(x: &DataMatrix, y: &[f64], theta: &Model) -> Result<Vec<f64>> {
    if y.len() != x.n() || theta.len() != x.p() {
        return Err(Error::DimensionMismatch(format!(
            "residuals: X is {}x{}, y has {}, theta has {}",
            x.p(),
            x.n(),
            y.len(),
            theta.len()
        )));
    }
    let fitted = x.predict(theta);
    Ok(y.iter().zip(fitted.iter()).map(|(yi, fi)| yi - fi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(p: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..p * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        DataMatrix::from_column_major(p, n, entries).unwrap()
    }

    #[test]
    fn orthonormal_design_inverts_exactly() {
        let x = DataMatrix::from_samples(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let theta = solve_least_squares(x.full(), &[3.0, -4.0]).unwrap();
        assert_relative_eq!(theta.as_slice()[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(theta.as_slice()[1], -4.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_fit() {
        let x = DataMatrix::from_column_major(1, 3, vec![1.0; 3]).unwrap();
        let theta = solve_least_squares(x.full(), &[2.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(theta.as_slice()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_fit_matches_grid_search() {
        let x = DataMatrix::from_column_major(1, 2, vec![1.0, 2.0]).unwrap();
        let y = [1.0, 1.0];
        // grid oracle over [-2, 2] in steps of 1e-4
        let best = (0..=40_000)
            .map(|k| -2.0 + k as f64 * 1e-4)
            .map(|t| (t, (y[0] - t).powi(2) + (y[1] - 2.0 * t).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_relative_eq!(best, 0.6, epsilon = 1e-4);
        let theta = solve_least_squares(x.full(), &y).unwrap();
        assert_relative_eq!(theta.as_slice()[0], 0.6, epsilon = 1e-12);
        assert!((theta.as_slice()[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn rank_deficient_falls_back_to_finite_solution() {
        // all samples collinear in p = 2
        let x = DataMatrix::from_samples(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![-1.0, -2.0]])
            .unwrap();
        let y = [1.0, 2.0, -1.0];
        let theta = solve_least_squares(x.full(), &y).unwrap();
        assert!(theta.is_finite());
        let r = residuals(&x, &y, &theta).unwrap();
        assert!(norm2(&r) < 1e-6);
        // minimum-norm solution lies along (1, 2)
        let t = theta.as_slice();
        assert_relative_eq!(t[1], 2.0 * t[0], epsilon = 1e-6);
        assert_relative_eq!(t[0], 0.2, epsilon = 1e-6);
    }

    #[test]
    fn zero_design_gives_zero_model() {
        let x = DataMatrix::from_column_major(2, 2, vec![0.0; 4]).unwrap();
        let theta = solve_least_squares(x.full(), &[1.0, 1.0]).unwrap();
        assert_eq!(theta, Model::zeros(2));
    }

    #[test]
    fn non_finite_responses_are_singular() {
        let x = DataMatrix::from_column_major(1, 2, vec![1.0, 1.0]).unwrap();
        let err = solve_least_squares(x.full(), &[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem));
    }

    #[test]
    fn subset_least_squares_uses_only_the_subset() {
        let x = DataMatrix::from_column_major(1, 4, vec![1.0; 4]).unwrap();
        let y = [2.0, 2.0, 2.0, 10.0];
        let s = ActiveSet::from_sorted(vec![0, 1, 2], 4).unwrap();
        let theta = solve_least_squares(x.subset(&s), &s.gather(&y)).unwrap();
        assert_relative_eq!(theta.as_slice()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn spectral_norm_rank_one() {
        let x = DataMatrix::from_column_major(2, 1, vec![3.0, 4.0]).unwrap();
        let est = spectral_norm_estimate(x.full());
        assert!((est - 25.0).abs() <= 0.25);
    }

    #[test]
    fn spectral_norm_identity() {
        let x = DataMatrix::from_samples(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let est = spectral_norm_estimate(x.full());
        assert!((est - 1.0).abs() <= 0.01);
    }

    #[test]
    fn spectral_norm_start_in_null_space() {
        let x = DataMatrix::from_column_major(2, 1, vec![1.0, -1.0]).unwrap();
        let est = spectral_norm_estimate(x.full());
        assert_relative_eq!(est, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn spectral_norm_matches_eigensolver() {
        let x = matrix(3, 5, 7);
        let gram = x.full().gram();
        let exact = gram.symmetric_eigen().eigenvalues.max();
        let est = spectral_norm_estimate(x.full());
        assert!(est <= exact * (1.0 + 1e-12));
        assert!(est >= 0.99 * exact);
    }

    #[test]
    fn block_gram_matches_direct_product() {
        let x = matrix(4, 700, 3);
        let s = ActiveSet::from_unsorted((0..700).filter(|i| i % 3 != 0).collect());
        let g = x.subset(&s).gram();
        let cols: Vec<f64> = s.iter().flat_map(|i| x.sample(i).to_vec()).collect();
        let xs = DMatrix::from_column_slice(4, s.len(), &cols);
        let direct = &xs * xs.transpose();
        assert!((g - direct).amax() < 1e-10);
    }

    #[test]
    fn residuals_examples() {
        let x = DataMatrix::from_column_major(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let y = [2.0, 2.0, 2.0];
        assert_eq!(residuals(&x, &y, &Model::zeros(1)).unwrap(), y.to_vec());
        assert_eq!(
            residuals(&x, &y, &Model::new(vec![1.0])).unwrap(),
            vec![1.0, 0.0, -1.0]
        );
        let exact: Vec<f64> = x.predict(&Model::new(vec![0.5])).iter().copied().collect();
        assert!(residuals(&x, &exact, &Model::new(vec![0.5]))
            .unwrap()
            .iter()
            .all(|r| *r == 0.0));
    }

    #[test]
    fn residuals_dimension_mismatch() {
        let x = DataMatrix::from_column_major(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(residuals(&x, &[1.0], &Model::zeros(1)).is_err());
    }

    #[test]
    fn active_set_helpers() {
        let a = ActiveSet::from_sorted(vec![0, 2, 3, 7], 8).unwrap();
        let b = ActiveSet::from_sorted(vec![1, 2, 7], 8).unwrap();
        assert_eq!(a.difference_count(&b), 2);
        assert_eq!(b.difference_count(&a), 1);
        assert_eq!(a.complement(8).indices(), &[1, 4, 5, 6]);
        assert!(ActiveSet::from_sorted(vec![2, 2], 8).is_err());
        assert!(ActiveSet::from_sorted(vec![9], 8).is_err());
    }

    proptest! {
        #[test]
        fn least_squares_is_stationary(seed in any::<u64>(), p in 1usize..6, extra in 0usize..20) {
            let n = p + extra + 1;
            let x = matrix(p, n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let theta = solve_least_squares(x.full(), &y).unwrap();
            let r = residuals(&x, &y, &theta).unwrap();
            let g = x.full().mul_vec(&r);
            let scale = x.full().frobenius_sq().sqrt() * norm2(&y);
            prop_assert!(g.amax() <= 1e-8 * scale.max(1e-300));
        }

        #[test]
        fn spectral_estimate_is_bracketed(seed in any::<u64>(), p in 1usize..6, n in 1usize..30) {
            let x = matrix(p, n, seed);
            let est = spectral_norm_estimate(x.full());
            let v = x.full();
            prop_assert!(est <= v.frobenius_sq() * (1.0 + 1e-12));
            prop_assert!(est >= v.max_column_norm_sq() * (1.0 - 1e-12));
        }

        #[test]
        fn residuals_are_affine_in_theta(seed in any::<u64>(), p in 1usize..5, n in 1usize..20) {
            let x = matrix(p, n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(!seed);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t1: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t2: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
            let r1 = residuals(&x, &y, &Model::new(t1)).unwrap();
            let r2 = residuals(&x, &y, &Model::new(t2)).unwrap();
            let r12 = residuals(&x, &y, &Model::new(sum)).unwrap();
            let r0 = residuals(&x, &y, &Model::zeros(p)).unwrap();
            for i in 0..n {
                prop_assert!((r1[i] + r2[i] - r12[i] - r0[i]).abs() <= 1e-12);
            }
        }
    }
}
