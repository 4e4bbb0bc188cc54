#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use torrent_core::{DataMatrix, Model};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, p: usize, n: usize) -> DataMatrix {
    let e = (0..p * n).map(|_| StandardNormal.sample(rng)).collect();
    DataMatrix::from_column_major(p, n, e).unwrap()
}

/// Minimum-norm least squares on the columns in `subset`, via SVD.
pub fn svd_least_squares(x: &DataMatrix, y: &[f64], subset: &[usize]) -> DVector<f64> {
    let p = x.p();
    let a = DMatrix::from_fn(subset.len(), p, |r, c| x.sample(subset[r])[c]);
    let b = DVector::from_iterator(subset.len(), subset.iter().map(|&i| y[i]));
    a.svd(true, true).solve(&b, 1e-12).unwrap()
}

fn subset_residual(x: &DataMatrix, y: &[f64], subset: &[usize], theta: &DVector<f64>) -> f64 {
    subset
        .iter()
        .map(|&i| {
            let fit: f64 = x.sample(i).iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum()
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive robust least squares: the `k`-subset whose least-squares fit
/// leaves the smallest residual. Returns the model and that residual.
pub fn brute_force_rlsr(x: &DataMatrix, y: &[f64], k: usize) -> (Model, f64) {
    let mut best = (DVector::zeros(x.p()), f64::INFINITY);
    for_each_subset(x.n(), k, |s| {
        let theta = svd_least_squares(x, y, s);
        let r = subset_residual(x, y, s, &theta);
        if r < best.1 {
            best = (theta, r);
        }
    });
    (Model::from_vector(best.0), best.1)
}

pub fn smallest_eigenvalue(g: DMatrix<f64>) -> f64 {
    g.symmetric_eigen().eigenvalues.min()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
