//! L1 baseline: extended basis pursuit
//!
//! ```text
//! min ||z||_1  s.t.  A z = y,   A = [X^T  (1/lambda) I],   z = [theta; lambda b]
//! ```
//!
//! solved with ADMM (projection onto `{A z = y}` alternated with soft
//! thresholding). `A A^T = X^T X + c^2 I` with `c = 1/lambda` is inverted
//! through the `p x p` matrix `c^2 I + X X^T`, which is factored once per
//! solve.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, Model};
use crate::solver::active_size;

/// Identifies this baseline in experiment outputs.
pub const SOLVER_ID: &str = "l1-admm-basis-pursuit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L1Config {
    pub lambda: f64,
    pub admm_rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for L1Config {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            admm_rho: 1.0,
            abs_tol: 1e-7,
            rel_tol: 1e-5,
            max_iters: 5000,
            lambda_grid: None,
        }
    }
}

impl L1Config {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lambda) {
            return Err(Error::BadConfig("lambda must be positive".into()));
        }
        if !positive(self.admm_rho) || !positive(self.abs_tol) || !positive(self.rel_tol) {
            return Err(Error::BadConfig("rho and tolerances must be positive".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || !grid.iter().all(|&l| positive(l)) {
                return Err(Error::BadConfig("lambda grid must be non-empty and positive".into()));
            }
        }
        Ok(())
    }
}

/// `count` log-spaced values from `low` to `high` inclusive.
pub fn log_grid(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        _ => {
            let (a, b) = (low.ln(), high.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// 20 points over `[1e-3, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, 20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Fit {
    pub model: Model,
    /// Recovered corruption `b = (second block of z) / lambda`.
    pub corruption: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub lambda: f64,
    /// `||z||_1` of the feasible iterate after each ADMM step.
    pub objective: Vec<f64>,
}

struct Projector<'a> {
    x: &'a DMatrix<f64>,
    c2: f64,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Projector<'a> {
    fn new(x: &'a DataMatrix, c: f64) -> Result<Self> {
        let p = x.p();
        let mut m = x.full().gram();
        let c2 = c * c;
        for i in 0..p {
            m[(i, i)] += c2;
        }
        let chol = m.cholesky().ok_or(Error::SingularSystem)?;
        Ok(Self {
            x: x.as_matrix(),
            c2,
            chol,
        })
    }

    /// `(X^T X + c^2 I)^{-1} v` by the Woodbury identity.
    fn solve_aat(&self, v: &DVector<f64>) -> DVector<f64> {
        let xv = self.x * v;
        let inner = self.chol.solve(&xv);
        (v - self.x.tr_mul(&inner)) / self.c2
    }
}

/// Solves the extended basis-pursuit problem for one `lambda`.
///
/// Hitting `max_iters` yields [`Error::NotConverged`] carrying the last
/// iterate.
pub fn l1_solve(x: &DataMatrix, y: &[f64], cfg: &L1Config) -> Result<L1Fit> {
    l1_solve_observed(x, y, cfg, |_, _| {})
}

/// As [`l1_solve`], calling `observe(iter, theta)` after every ADMM step.
pub fn l1_solve_observed(
    x: &DataMatrix,
    y: &[f64],
    cfg: &L1Config,
    mut observe: impl FnMut(usize, &Model),
) -> Result<L1Fit> {
    cfg.validate()?;
    let (p, n) = (x.p(), x.n());
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, X has {n} samples",
            y.len()
        )));
    }
    let c = 1.0 / cfg.lambda;
    let proj = Projector::new(x, c)?;
    let yv = DVector::from_column_slice(y);
    let dim = p + n;
    let rho = cfg.admm_rho;
    let sqrt_dim = (dim as f64).sqrt();

    // A v = X^T v_theta + c v_b ;  A^T w = [X w; c w]
    let apply_a = |v: &DVector<f64>| -> DVector<f64> {
        proj.x.tr_mul(&v.rows(0, p)) + v.rows(p, n) * c
    };
    let apply_at = |w: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(dim);
        out.rows_mut(0, p).copy_from(&(proj.x * w));
        out.rows_mut(p, n).copy_from(&(w * c));
        out
    };
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let defect = apply_a(v) - &yv;
        v - apply_at(&proj.solve_aat(&defect))
    };

    let mut z = DVector::zeros(dim);
    let mut u = DVector::zeros(dim);
    let mut xk = project(&z);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    for k in 1..=cfg.max_iters {
        iters = k;
        xk = project(&(&z - &u));
        let z_old = z.clone();
        let shrink = 1.0 / rho;
        z = (&xk + &u).map(|v| v.signum() * (v.abs() - shrink).max(0.0));
        u += &xk - &z;

        objective.push(xk.lp_norm(1));
        observe(k, &Model::new(xk.rows(0, p).iter().copied().collect()));

        let primal = (&xk - &z).norm();
        let dual = rho * (&z - &z_old).norm();
        let eps_pri = sqrt_dim * cfg.abs_tol + cfg.rel_tol * xk.norm().max(z.norm());
        let eps_dual = sqrt_dim * cfg.abs_tol + cfg.rel_tol * rho * u.norm();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }

    let fit = L1Fit {
        model: Model::new(xk.rows(0, p).iter().copied().collect()),
        corruption: xk.rows(p, n).iter().map(|v| v * c).collect(),
        iters,
        converged,
        lambda: cfg.lambda,
        objective,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NotConverged(Box::new(fit)))
    }
}

/// Accepts a converged fit or the best iterate of a non-converged one.
pub fn accept_best_iterate(result: Result<L1Fit>) -> Result<L1Fit> {
    match result {
        Err(Error::NotConverged(fit)) => Ok(*fit),
        other => other,
    }
}

/// Criterion used by [`l1_grid_fit`] to pick a `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection<'a> {
    /// Smallest `||theta - w*||_2`.
    GroundTruth(&'a Model),
    /// Smallest norm of the `ceil((1 - beta) n)` smallest residuals.
    TrimmedResidual { beta: f64 },
}

fn trimmed_residual(x: &DataMatrix, y: &[f64], theta: &Model, beta: f64) -> f64 {
    let fitted = x.predict(theta);
    let mut r: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).abs()).collect();
    let k = active_size(beta, r.len());
    r.sort_unstable_by(f64::total_cmp);
    r[..k].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs [`l1_solve`] for every `lambda` in `grid` (in parallel) and returns
/// the selected fit. Non-converged solves compete with their last iterate;
/// ties go to the earlier grid point.
pub fn l1_grid_fit(
    x: &DataMatrix,
    y: &[f64],
    base: &L1Config,
    grid: &[f64],
    selection: Selection<'_>,
) -> Result<L1Fit> {
    if grid.is_empty() {
        return Err(Error::BadConfig("lambda grid is empty".into()));
    }
    let fits: Vec<L1Fit> = grid
        .par_iter()
        .map(|&lambda| {
            let cfg = L1Config {
                lambda,
                lambda_grid: None,
                ..base.clone()
            };
            accept_best_iterate(l1_solve(x, y, &cfg))
        })
        .collect::<Result<_>>()?;
    let score = |fit: &L1Fit| match selection {
        Selection::GroundTruth(w) => fit.model.distance(w),
        Selection::TrimmedResidual { beta } => trimmed_residual(x, y, &fit.model, beta),
    };
    let best = fits
        .iter()
        .enumerate()
        .min_by(|a, b| score(a.1).total_cmp(&score(b.1)).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    Ok(fits.into_iter().nth(best).expect("index in range"))
}
