//! The thresholding outer loop and its fully corrective, gradient and hybrid
//! update rules.
//!
//! Every iteration updates the model on the current active set, recomputes
//! the residuals of all `n` samples, and keeps the `ceil((1 - beta) n)`
//! samples with the smallest residual magnitudes as the next active set.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hd::{iht_solve, IhtConfig};
use crate::linalg::{
    residuals, solve_least_squares, spectral_norm_estimate, ActiveSet, DataMatrix, Model,
};
use crate::threshold::hard_threshold_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fc,
    Gd,
    Hyb,
    Hd,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::Gd => "gd",
            Variant::Hyb => "hyb",
            Variant::Hd => "hd",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(Variant::Fc),
            "gd" => Ok(Variant::Gd),
            "hyb" => Ok(Variant::Hyb),
            "hd" => Ok(Variant::Hd),
            other => Err(Error::BadConfig(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Fc,
    Gd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ResidualTol,
    RelChange,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Assumed corruption fraction; active sets hold `ceil((1 - beta) n)` samples.
    pub beta: f64,
    /// Stop once the active-set residual norm drops to this value.
    pub epsilon: f64,
    /// Gradient step for GD/HYB (and the IHT step for HD). `None` picks
    /// `1 / lambda_max` automatically.
    pub step_size: Option<f64>,
    /// HYB switches to the fully corrective step once at most `delta`
    /// samples entered the active set.
    pub delta: usize,
    pub max_iters: usize,
    pub rel_change_tol: f64,
    /// Target sparsity for HD.
    pub sparsity: Option<usize>,
    /// HD inner tolerance; defaults to `1e-2 * epsilon`.
    pub inner_tol: Option<f64>,
    pub max_inner_iters: usize,
    /// Symmetric positive definite `Sigma_0` (rows); the design is whitened
    /// by `Sigma_0^{-1/2}` before solving.
    pub whiten_with: Option<Vec<Vec<f64>>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Fc,
            beta: 0.2,
            epsilon: 1e-8,
            step_size: None,
            delta: 0,
            max_iters: 400,
            rel_change_tol: 1e-14,
            sparsity: None,
            inner_tol: None,
            max_inner_iters: 1000,
            whiten_with: None,
        }
    }
}

impl SolverConfig {
    pub fn new(variant: Variant, beta: f64) -> Self {
        Self {
            variant,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::BadConfig(format!(
                "beta must lie in (0, 0.5), got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::BadConfig("epsilon must be positive".into()));
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::BadConfig("step size must be positive".into()));
            }
        }
        if !(self.rel_change_tol >= 0.0) {
            return Err(Error::BadConfig("rel_change_tol must be >= 0".into()));
        }
        if let Some(tol) = self.inner_tol {
            if !(tol > 0.0) {
                return Err(Error::BadConfig("inner tolerance must be positive".into()));
            }
        }
        match (self.variant, self.sparsity) {
            (Variant::Hd, None) => {
                return Err(Error::BadConfig("HD requires a target sparsity".into()))
            }
            (_, Some(s)) if s == 0 || s > p => {
                return Err(Error::BadConfig(format!(
                    "sparsity {s} outside [1, {p}]"
                )))
            }
            _ => {}
        }
        if let Some(sigma) = &self.whiten_with {
            if sigma.len() != p || sigma.iter().any(|row| row.len() != p) {
                return Err(Error::BadConfig(format!(
                    "whitening matrix must be {p}x{p}"
                )));
            }
        }
        Ok(())
    }
}

/// Active-set size `ceil((1 - beta) n)`, clamped to `[1, n]`.
pub fn active_size(beta: f64, n: usize) -> usize {
    let raw = (1.0 - beta) * n as f64;
    // absorb representation error such as (1 - 0.35) * 1000 = 650.0000000000001
    let k = (raw - 1e-9 * raw.max(1.0)).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Known ground truth, used only to annotate the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub model: Model,
    pub corruption: Option<Vec<f64>>,
}

impl GroundTruth {
    pub fn model(model: Model) -> Self {
        Self {
            model,
            corruption: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub update_kind: UpdateKind,
    /// `||r_{S_t}||_2` on the newly selected active set.
    pub active_residual_norm: f64,
    pub model_error: Option<f64>,
    /// `||b_{S_t}||_2` on the newly selected active set.
    pub corruption_mass: Option<f64>,
    pub set_churn: usize,
    /// Seconds since the solve started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub active_set: ActiveSet,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub wall_time: f64,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Samples that entered or left between two active sets, whichever is larger.
///
/// For equally sized sets this is `|S \ S_prev|`; it also counts the samples
/// dropped when moving from the full initial set to the first active set.
pub fn set_churn(current: &ActiveSet, previous: &ActiveSet) -> usize {
    current
        .difference_count(previous)
        .max(previous.difference_count(current))
}

/// Fully corrective step: exact least squares on `(X_S, y_S)`.
pub fn update_fc(x: &DataMatrix, y: &[f64], set: &ActiveSet) -> Result<Model> {
    solve_least_squares(x.subset(set), &set.gather(y))
}

/// One gradient step `theta - eta * X_S (X_S^T theta - y_S)`.
pub fn update_gd(x: &DataMatrix, y: &[f64], set: &ActiveSet, theta: &Model, eta: f64) -> Model {
    let grad = x.subset(set).normal_gradient(theta.as_slice(), &set.gather(y));
    Model::new(
        theta
            .as_slice()
            .iter()
            .zip(grad.iter())
            .map(|(t, g)| t - eta * g)
            .collect(),
    )
}

/// Hybrid step: gradient while the active set is still moving, fully
/// corrective once at most `delta` samples changed.
///
/// `previous = None` marks the first iteration, which always takes the
/// gradient step.
pub fn update_hyb(
    x: &DataMatrix,
    y: &[f64],
    set: &ActiveSet,
    previous: Option<&ActiveSet>,
    theta: &Model,
    eta: f64,
    delta: usize,
) -> Result<(Model, UpdateKind)> {
    let unstable = previous.is_none_or(|prev| set_churn(set, prev) > delta);
    if unstable {
        Ok((update_gd(x, y, set, theta, eta), UpdateKind::Gd))
    } else {
        Ok((update_fc(x, y, set)?, UpdateKind::Fc))
    }
}

/// `Sigma^{-1/2}` for a symmetric positive definite `Sigma`.
fn inverse_sqrt(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.len();
    let sigma = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
    let asym = (&sigma - sigma.transpose()).amax();
    if !(asym <= 1e-10 * sigma.amax().max(1.0)) {
        return Err(Error::BadConfig("whitening matrix must be symmetric".into()));
    }
    let eig = sigma.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::BadConfig(
            "whitening matrix must be positive definite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Runs the outer loop with the update rule selected by `config.variant`.
pub fn torrent_solve(
    x: &DataMatrix,
    y: &[f64],
    config: &SolverConfig,
    ground_truth: Option<&GroundTruth>,
) -> Result<FitResult> {
    config.validate(x.p())?;
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries but X has {} samples",
            y.len(),
            x.n()
        )));
    }
    if let Some(gt) = ground_truth {
        if gt.model.len() != x.p() {
            return Err(Error::DimensionMismatch(
                "ground-truth model has the wrong length".into(),
            ));
        }
        if gt.corruption.as_ref().is_some_and(|b| b.len() != x.n()) {
            return Err(Error::DimensionMismatch(
                "ground-truth corruption has the wrong length".into(),
            ));
        }
    }

    match &config.whiten_with {
        None => run(x, y, config, ground_truth, None),
        Some(sigma) => {
            let w = inverse_sqrt(sigma)?;
            let whitened = DataMatrix::from_matrix(&w * x.as_matrix())?;
            let mut fit = run(&whitened, y, config, ground_truth, Some(&w))?;
            // theta_whitened = Sigma^{1/2} theta, so theta = Sigma^{-1/2} theta_whitened
            fit.model = Model::from_vector(&w * fit.model.to_vector());
            Ok(fit)
        }
    }
}

/// High-dimensional variant: requires `config.sparsity`; the update is an
/// s-sparse IHT solve on the active set.
pub fn torrent_hd_solve(
    x: &DataMatrix,
    y: &[f64],
    config: &SolverConfig,
    ground_truth: Option<&GroundTruth>,
) -> Result<FitResult> {
    if config.sparsity.is_none() {
        return Err(Error::BadConfig("HD requires a target sparsity".into()));
    }
    let config = SolverConfig {
        variant: Variant::Hd,
        ..config.clone()
    };
    torrent_solve(x, y, &config, ground_truth)
}

fn run(
    x: &DataMatrix,
    y: &[f64],
    config: &SolverConfig,
    ground_truth: Option<&GroundTruth>,
    unwhiten: Option<&DMatrix<f64>>,
) -> Result<FitResult> {
    let start = Instant::now();
    let n = x.n();
    let k = active_size(config.beta, n);

    let eta = match (config.variant, config.step_size) {
        (Variant::Gd | Variant::Hyb, None) => 1.0 / spectral_norm_estimate(x.full()),
        (_, Some(eta)) => eta,
        _ => f64::NAN,
    };
    let iht = match config.variant {
        Variant::Hd => Some(IhtConfig {
            sparsity: config.sparsity.expect("validated"),
            step: config.step_size,
            inner_tol: config.inner_tol.unwrap_or(1e-2 * config.epsilon),
            max_inner_iters: config.max_inner_iters,
        }),
        _ => None,
    };

    let mut theta = Model::zeros(x.p());
    let mut set = ActiveSet::full(n);
    let mut previous: Option<ActiveSet> = None;
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 1..=config.max_iters {
        let (next, kind) = match config.variant {
            Variant::Fc => (update_fc(x, y, &set)?, UpdateKind::Fc),
            Variant::Gd => (update_gd(x, y, &set, &theta, eta), UpdateKind::Gd),
            Variant::Hyb => {
                update_hyb(x, y, &set, previous.as_ref(), &theta, eta, config.delta)?
            }
            Variant::Hd => {
                let cfg = iht.as_ref().expect("HD config");
                let view = x.subset(&set);
                (iht_solve(view, &set.gather(y), cfg, Some(&theta))?, UpdateKind::Fc)
            }
        };
        if !next.is_finite() {
            return Err(Error::SingularSystem);
        }

        let r = residuals(x, y, &next)?;
        let selected = hard_threshold_indices(&r, k)?;
        let active_residual_norm = selected.norm_of(&r);
        let change = next.distance(&theta);
        let settled = change <= config.rel_change_tol * next.norm();

        let reported = match unwhiten {
            Some(w) if ground_truth.is_some() => Some(Model::from_vector(w * next.to_vector())),
            _ => None,
        };
        trace.push(IterationRecord {
            iter,
            update_kind: kind,
            active_residual_norm,
            model_error: ground_truth
                .map(|gt| reported.as_ref().unwrap_or(&next).distance(&gt.model)),
            corruption_mass: ground_truth
                .and_then(|gt| gt.corruption.as_deref())
                .map(|b| selected.norm_of(b)),
            set_churn: set_churn(&selected, &set),
            elapsed: start.elapsed().as_secs_f64(),
        });

        previous = Some(std::mem::replace(&mut set, selected));
        theta = next;

        if active_residual_norm <= config.epsilon {
            termination = Termination::ResidualTol;
            break;
        }
        if settled {
            termination = Termination::RelChange;
            break;
        }
    }

    Ok(FitResult {
        model: theta,
        active_set: set,
        trace,
        termination,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> (DataMatrix, Vec<f64>) {
        (
            DataMatrix::from_column_major(1, 4, vec![1.0; 4]).unwrap(),
            vec![2.0, 2.0, 2.0, 10.0],
        )
    }

    #[test]
    fn active_size_rounds_up() {
        assert_eq!(active_size(0.25, 4), 3);
        assert_eq!(active_size(0.25, 12), 9);
        assert_eq!(active_size(0.35, 1000), 650);
        assert_eq!(active_size(0.3, 10), 7);
        assert_eq!(active_size(0.2, 7), 6);
        assert_eq!(active_size(0.49, 1), 1);
    }

    #[test]
    fn fc_examples() {
        let (x, y) = toy();
        let all = ActiveSet::full(4);
        assert_relative_eq!(update_fc(&x, &y, &all).unwrap().as_slice()[0], 4.0, epsilon = 1e-14);
        let clean = ActiveSet::from_sorted(vec![0, 1, 2], 4).unwrap();
        assert_relative_eq!(update_fc(&x, &y, &clean).unwrap().as_slice()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gd_examples() {
        let x = DataMatrix::from_column_major(1, 1, vec![1.0]).unwrap();
        let s = ActiveSet::full(1);
        let t = update_gd(&x, &[1.0], &s, &Model::zeros(1), 1.0);
        assert_eq!(t.as_slice(), &[1.0]);

        let (x, y) = toy();
        let clean = ActiveSet::from_sorted(vec![0, 1, 2], 4).unwrap();
        let opt = Model::new(vec![2.0]);
        assert_eq!(update_gd(&x, &y, &clean, &opt, 0.3), opt);

        let tiny = update_gd(&x, &y, &clean, &Model::new(vec![1.0]), 1e-15);
        assert!((tiny.as_slice()[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn hyb_branch_selection() {
        let (x, y) = toy();
        let s = ActiveSet::from_sorted(vec![0, 1, 2], 4).unwrap();
        let theta = Model::new(vec![3.0]);
        let (_, kind) = update_hyb(&x, &y, &s, Some(&s), &theta, 0.1, 0).unwrap();
        assert_eq!(kind, UpdateKind::Fc);

        let moved = ActiveSet::from_sorted(vec![0, 1, 3], 4).unwrap();
        let (_, kind) = update_hyb(&x, &y, &s, Some(&moved), &theta, 0.1, 0).unwrap();
        assert_eq!(kind, UpdateKind::Gd);
        let (_, kind) = update_hyb(&x, &y, &s, Some(&moved), &theta, 0.1, 1).unwrap();
        assert_eq!(kind, UpdateKind::Fc);

        // leaving the full initial set drops beta * n samples
        let full = ActiveSet::full(4);
        let (_, kind) = update_hyb(&x, &y, &s, Some(&full), &theta, 0.1, 0).unwrap();
        assert_eq!(kind, UpdateKind::Gd);
        let (_, kind) = update_hyb(&x, &y, &full, None, &theta, 0.1, 0).unwrap();
        assert_eq!(kind, UpdateKind::Gd);
    }

    #[test]
    fn toy_trace_matches_hand_derivation() {
        let (x, y) = toy();
        let gt = GroundTruth {
            model: Model::new(vec![2.0]),
            corruption: Some(vec![0.0, 0.0, 0.0, 8.0]),
        };
        let fit = torrent_solve(&x, &y, &SolverConfig::new(Variant::Fc, 0.25), Some(&gt)).unwrap();
        assert_eq!(fit.trace.len(), 2);
        assert_eq!(fit.trace[0].active_residual_norm, 12f64.sqrt());
        assert_eq!(fit.trace[0].model_error, Some(2.0));
        assert_eq!(fit.trace[0].corruption_mass, Some(0.0));
        assert_eq!(fit.trace[0].set_churn, 1);
        assert!(fit.trace[1].active_residual_norm < 1e-12);
        approx::assert_abs_diff_eq!(fit.model.as_slice()[0], 2.0, epsilon = 1e-12);
        assert_eq!(fit.active_set.indices(), &[0, 1, 2]);
        assert_eq!(fit.termination, Termination::ResidualTol);
    }

    #[test]
    fn clean_data_stops_after_one_iteration() {
        let x = DataMatrix::from_samples(&[
            vec![1.0, 0.5],
            vec![-0.3, 2.0],
            vec![0.7, 0.7],
            vec![1.5, -1.0],
        ])
        .unwrap();
        let w = Model::new(vec![0.25, -1.5]);
        let y: Vec<f64> = x.predict(&w).iter().copied().collect();
        let fit = torrent_solve(&x, &y, &SolverConfig::new(Variant::Fc, 0.2), None).unwrap();
        assert_eq!(fit.iterations(), 1);
        assert!(fit.model.distance(&w) <= 1e-10);
    }

    #[test]
    fn config_validation() {
        let x = DataMatrix::from_column_major(2, 3, vec![1.0; 6]).unwrap();
        let y = [0.0; 3];
        for beta in [0.0, 0.5, -0.1, f64::NAN] {
            let cfg = SolverConfig::new(Variant::Fc, beta);
            assert!(matches!(torrent_solve(&x, &y, &cfg, None), Err(Error::BadConfig(_))));
        }
        let cfg = SolverConfig {
            epsilon: 0.0,
            ..SolverConfig::default()
        };
        assert!(torrent_solve(&x, &y, &cfg, None).is_err());
        let cfg = SolverConfig {
            step_size: Some(0.0),
            ..SolverConfig::new(Variant::Gd, 0.2)
        };
        assert!(torrent_solve(&x, &y, &cfg, None).is_err());
        assert!(torrent_solve(&x, &y, &SolverConfig::new(Variant::Hd, 0.2), None).is_err());
        let cfg = SolverConfig {
            sparsity: Some(3),
            ..SolverConfig::new(Variant::Hd, 0.2)
        };
        assert!(torrent_solve(&x, &y, &cfg, None).is_err());
        assert!(matches!(
            torrent_solve(&x, &[0.0; 2], &SolverConfig::default(), None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_responses_give_zero_model() {
        let x = DataMatrix::from_column_major(2, 3, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let fit = torrent_solve(&x, &[0.0; 3], &SolverConfig::default(), None).unwrap();
        assert_eq!(fit.model, Model::zeros(2));
        assert_eq!(fit.trace.len(), 1);
    }

    #[test]
    fn whitening_recovers_original_coordinates() {
        let x = DataMatrix::from_samples(&[
            vec![1.0, 0.2],
            vec![-0.5, 2.0],
            vec![0.3, -1.1],
            vec![2.0, 0.4],
            vec![-1.2, -0.6],
            vec![0.9, 1.3],
        ])
        .unwrap();
        let w = Model::new(vec![0.6, -0.8]);
        let mut y: Vec<f64> = x.predict(&w).iter().copied().collect();
        y[4] += 30.0;
        let cfg = SolverConfig {
            whiten_with: Some(vec![vec![2.0, 0.3], vec![0.3, 0.5]]),
            ..SolverConfig::new(Variant::Fc, 0.2)
        };
        let gt = GroundTruth::model(w.clone());
        let fit = torrent_solve(&x, &y, &cfg, Some(&gt)).unwrap();
        assert!(fit.model.distance(&w) < 1e-10);
        assert!(fit.trace.last().unwrap().model_error.unwrap() < 1e-10);

        let bad = SolverConfig {
            whiten_with: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ..SolverConfig::new(Variant::Fc, 0.2)
        };
        assert!(matches!(torrent_solve(&x, &y, &bad, None), Err(Error::BadConfig(_))));
    }
}
