//! Sparse active-set solve used by the high-dimensional variant.
//!
//! The fully corrective least-squares step is replaced by an s-sparse
//! constrained fit, computed with iterative hard thresholding (IHT).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_estimate, SubsetView, Model};
use crate::threshold::hard_threshold_coefficients;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    pub sparsity: usize,
    /// Fixed gradient step. `None` picks a normalized step each iteration:
    /// exact line search on the working support, halved while a support
    /// change would raise the objective.
    pub step: Option<f64>,
    /// Stop once `||theta_{k+1} - theta_k||_2` falls to this value.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
}

impl IhtConfig {
    pub fn new(sparsity: usize) -> Self {
        Self {
            sparsity,
            step: None,
            inner_tol: 1e-10,
            max_inner_iters: 1000,
        }
    }
}

/// Iterates `theta <- H_s(theta - step * X_S (X_S^T theta - y_S))` from
/// `warm_start` (or zero) and returns the last s-sparse iterate.
///
/// With the automatic step the active-set objective never increases.
pub fn iht_solve(
    x_s: SubsetView<'_>,
    y_s: &[f64],
    cfg: &IhtConfig,
    warm_start: Option<&Model>,
) -> Result<Model> {
    let p = x_s.p();
    if cfg.sparsity == 0 || cfg.sparsity > p {
        return Err(Error::BadK {
            k: cfg.sparsity,
            len: p,
        });
    }
    if x_s.is_empty() || y_s.len() != x_s.len() {
        return Err(Error::DimensionMismatch(
            "IHT needs a non-empty view and matching responses".into(),
        ));
    }
    if warm_start.is_some_and(|w| w.len() != p) {
        return Err(Error::DimensionMismatch("warm start has the wrong length".into()));
    }

    let mut theta = match warm_start {
        Some(w) => hard_threshold_coefficients(w, cfg.sparsity)?,
        None => Model::zeros(p),
    };
    let mut fallback_step = cfg.step;
    let mut last_objective = f64::INFINITY;
    for _ in 0..cfg.max_inner_iters {
        let mut diff = x_s.tr_mul_vec(theta.as_slice());
        for (d, yi) in diff.iter_mut().zip(y_s) {
            *d -= yi;
        }
        let objective: f64 = diff.iter().map(|d| d * d).sum();
        debug_assert!(
            objective <= last_objective * (1.0 + 1e-6) + 1e-12 || cfg.step.is_some(),
            "IHT objective increased: {last_objective} -> {objective}"
        );
        last_objective = objective;

        // descent direction -X_S (X_S^T theta - y_S)
        let descent: Vec<f64> = x_s.mul_vec(&diff).iter().map(|g| -g).collect();
        let step_to = |mu: f64| -> Result<Model> {
            let stepped = theta
                .as_slice()
                .iter()
                .zip(&descent)
                .map(|(t, g)| t + mu * g)
                .collect();
            hard_threshold_coefficients(&Model::new(stepped), cfg.sparsity)
        };

        let next = match cfg.step {
            Some(step) => step_to(step)?,
            None => {
                match normalized_step(x_s, &theta, &descent, cfg.sparsity)? {
                    Some(mu) => backtrack(x_s, &theta, mu, &step_to)?,
                    None => {
                        // stationary on the current support: plain step
                        let step = match fallback_step {
                            Some(s) => s,
                            None => {
                                let lambda = spectral_norm_estimate(x_s);
                                if lambda == 0.0 {
                                    return Ok(theta);
                                }
                                fallback_step = Some(1.0 / lambda);
                                1.0 / lambda
                            }
                        };
                        step_to(step)?
                    }
                }
            }
        };
        let moved = next.distance(&theta);
        theta = next;
        if moved <= cfg.inner_tol {
            break;
        }
    }
    Ok(theta)
}

fn support(theta: &Model) -> Vec<usize> {
    theta
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Exact line-search step along the descent direction restricted to the
/// working support. `None` when that restriction vanishes.
fn normalized_step(
    x_s: SubsetView<'_>,
    theta: &Model,
    descent: &[f64],
    s: usize,
) -> Result<Option<f64>> {
    let working = if theta.nonzeros() == s {
        support(theta)
    } else {
        let ahead = theta.as_slice().iter().zip(descent).map(|(t, g)| t + g).collect();
        support(&hard_threshold_coefficients(&Model::new(ahead), s)?)
    };
    let mut g = vec![0.0; descent.len()];
    for &j in &working {
        g[j] = descent[j];
    }
    let num: f64 = g.iter().map(|v| v * v).sum();
    let den: f64 = x_s.tr_mul_vec(&g).iter().map(|v| v * v).sum();
    Ok((num > 0.0 && den > 0.0).then(|| num / den))
}

/// Halves `mu` until a support change no longer overshoots the curvature
/// along the move, which keeps the objective non-increasing.
fn backtrack(
    x_s: SubsetView<'_>,
    theta: &Model,
    mut mu: f64,
    step_to: &impl Fn(f64) -> Result<Model>,
) -> Result<Model> {
    let before = support(theta);
    for _ in 0..60 {
        let cand = step_to(mu)?;
        if theta.nonzeros() == 0 || support(&cand) == before {
            return Ok(cand);
        }
        let delta: Vec<f64> = cand
            .as_slice()
            .iter()
            .zip(theta.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let dn: f64 = delta.iter().map(|v| v * v).sum();
        let xdn: f64 = x_s.tr_mul_vec(&delta).iter().map(|v| v * v).sum();
        if xdn == 0.0 || mu <= 0.99 * dn / xdn {
            return Ok(cand);
        }
        mu *= 0.5;
    }
    step_to(mu)
}
