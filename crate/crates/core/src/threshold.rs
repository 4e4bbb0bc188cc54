//! Hard thresholding on residual vectors (keep the smallest magnitudes) and
//! on coefficient vectors (keep the largest magnitudes).
//!
//! Ties in magnitude are always broken in favour of the smaller index, so
//! repeated runs produce identical active sets.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{ActiveSet, Model};

/// Below this length selection falls back to a full sort.
const FULL_SORT_BELOW: usize = 64;

fn by_small_magnitude(v: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b))
}

fn by_large_magnitude(v: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b))
}

/// Indices of the first `k` entries of `0..n` under `order`, sorted ascending.
fn select_first(n: usize, k: usize, order: impl Fn(&usize, &usize) -> Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        if n < FULL_SORT_BELOW {
            idx.sort_unstable_by(&order);
        } else {
            idx.select_nth_unstable_by(k - 1, &order);
        }
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// `HT(v; k)`: the indices of the `k` smallest-magnitude entries of `v`.
pub fn hard_threshold_indices(v: &[f64], k: usize) -> Result<ActiveSet> {
    let n = v.len();
    if k == 0 || k > n {
        return Err(Error::BadK { k, len: n });
    }
    let kept = select_first(n, k, by_small_magnitude(v));
    Ok(ActiveSet::from_sorted(kept, n).expect("selection is sorted and in range"))
}

/// Keeps the `s` largest-magnitude coefficients of `theta` and zeroes the rest.
pub fn hard_threshold_coefficients(theta: &Model, s: usize) -> Result<Model> {
    let v = theta.as_slice();
    let p = v.len();
    if s == 0 || s > p {
        return Err(Error::BadK { k: s, len: p });
    }
    if s == p {
        return Ok(theta.clone());
    }
    let mut out = vec![0.0; p];
    for i in select_first(p, s, by_large_magnitude(v)) {
        out[i] = v[i];
    }
    Ok(Model::new(out))
}
