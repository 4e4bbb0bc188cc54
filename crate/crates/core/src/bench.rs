//! Experiment harness: success-probability grids, knob sweeps and timing
//! races over seeded synthetic instances.
//!
//! Every (cell, trial) pair owns its instance, derived from the base seed
//! and the cell coordinates only, so all solvers in a cell see identical
//! data and any single cell can be re-run in isolation. Results are merged
//! in cell order, which keeps the output independent of the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{gen_instance, Adversary, Covariance, InstanceSpec, RegressionInstance};
use crate::error::{Error, Result};
use crate::io::instance_digest;
use crate::l1::{self, L1Config, Selection};
use crate::linalg::Model;
use crate::solver::{torrent_solve, SolverConfig, Termination, Variant};

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Phase,
    Sweep,
    Race,
}

impl ExperimentKind {
    pub fn default_trials(self) -> usize {
        match self {
            ExperimentKind::Phase => 100,
            ExperimentKind::Sweep | ExperimentKind::Race => 20,
        }
    }
}

/// Knob grids. The experiment runs the cartesian product of the four grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub alpha: Vec<f64>,
    pub n: Vec<usize>,
    pub p: usize,
    #[serde(default = "zero_grid")]
    pub sigma: Vec<f64>,
    /// Corruption magnitude multipliers `M`.
    #[serde(default = "default_scale_grid")]
    pub scale: Vec<f64>,
    #[serde(default)]
    pub sparsity_s_star: Option<usize>,
    #[serde(default = "default_adversary")]
    pub adversary: Adversary,
    #[serde(default = "default_covariance")]
    pub covariance: Covariance,
}

fn zero_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_scale_grid() -> Vec<f64> {
    vec![5.0]
}

fn default_adversary() -> Adversary {
    Adversary::UniformOblivious
}

fn default_covariance() -> Covariance {
    Covariance::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Torrent {
        config: SolverConfig,
        /// When set, `beta = min(alpha + offset, 0.499)` per cell.
        #[serde(default)]
        beta_offset: Option<f64>,
    },
    L1 {
        #[serde(default)]
        config: L1Config,
        /// Grid searched per instance; empty means `config.lambda` only.
        #[serde(default)]
        grid: Vec<f64>,
        /// Select `lambda` with the ground truth (otherwise trimmed residual).
        #[serde(default = "yes")]
        oracle_selection: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSolver {
    pub name: String,
    pub solver: SolverSpec,
}

impl NamedSolver {
    pub fn torrent(name: &str, config: SolverConfig) -> Self {
        Self {
            name: name.into(),
            solver: SolverSpec::Torrent {
                config,
                beta_offset: None,
            },
        }
    }

    pub fn l1(name: &str, config: L1Config, grid: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            solver: SolverSpec::L1 {
                config,
                grid,
                oracle_selection: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub axes: Axes,
    #[serde(default)]
    pub trials_per_cell: Option<usize>,
    pub solvers: Vec<NamedSolver>,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    pub seed: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_SUCCESS_THRESHOLD
}

impl ExperimentSpec {
    pub fn trials(&self) -> usize {
        self.trials_per_cell
            .unwrap_or_else(|| self.kind.default_trials())
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.axes;
        if a.alpha.is_empty() || a.n.is_empty() || a.sigma.is_empty() || a.scale.is_empty() {
            return Err(Error::BadConfig("every axis grid must be non-empty".into()));
        }
        if self.trials() == 0 {
            return Err(Error::BadConfig("trials_per_cell must be >= 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::BadConfig("at least one solver is required".into()));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::BadConfig("success threshold must be positive".into()));
        }
        for cell in self.cells() {
            self.instance_spec(&cell, 0).validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let a = &self.axes;
        let mut out = Vec::new();
        for &alpha in &a.alpha {
            for &n in &a.n {
                for &sigma in &a.sigma {
                    for &scale in &a.scale {
                        out.push(Cell {
                            alpha,
                            n,
                            p: a.p,
                            sigma,
                            scale,
                            seed: cell_seed(self.seed, alpha, n, a.p, sigma, scale),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn instance_spec(&self, cell: &Cell, trial: usize) -> InstanceSpec {
        InstanceSpec {
            p: cell.p,
            n: cell.n,
            sparsity_s_star: self.axes.sparsity_s_star,
            sigma: cell.sigma,
            alpha: cell.alpha,
            corruption_scale: cell.scale,
            adversary: self.axes.adversary.clone(),
            covariance: self.axes.covariance.clone(),
            seed: trial_seed(cell.seed, trial),
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub alpha: f64,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub scale: f64,
    pub seed: u64,
}

fn digest_u64(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Seed of a grid cell, a hash of the base seed and the cell coordinates.
pub fn cell_seed(base: u64, alpha: f64, n: usize, p: usize, sigma: f64, scale: f64) -> u64 {
    digest_u64(&format!(
        "cell:{base}:{:016x}:{n}:{p}:{:016x}:{:016x}",
        alpha.to_bits(),
        sigma.to_bits(),
        scale.to_bits()
    ))
}

pub fn trial_seed(cell_seed: u64, trial: usize) -> u64 {
    digest_u64(&format!("trial:{cell_seed}:{trial}"))
}

/// Result of one solver on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub model: Model,
    pub iters: usize,
    pub wall_time: f64,
    pub converged: bool,
    /// `(seconds, ||theta_t - w*||_2)` after each iteration.
    pub trajectory: Vec<(f64, f64)>,
}

fn resolve_config(config: &SolverConfig, beta_offset: Option<f64>, inst: &RegressionInstance) -> SolverConfig {
    let mut cfg = config.clone();
    if let Some(offset) = beta_offset {
        cfg.beta = (inst.spec.alpha + offset).min(0.499);
    }
    if cfg.variant == Variant::Hd && cfg.sparsity.is_none() {
        // inflate the known sparsity, capped at p
        cfg.sparsity = inst
            .spec
            .sparsity_s_star
            .map(|s| (2 * s).min(inst.x.p()));
    }
    cfg
}

/// Runs one solver on one instance. Wall time excludes instance generation.
pub fn run_solver(solver: &SolverSpec, inst: &RegressionInstance) -> Result<SolveOutcome> {
    match solver {
        SolverSpec::Torrent { config, beta_offset } => {
            let cfg = resolve_config(config, *beta_offset, inst);
            let gt = inst.ground_truth();
            let fit = torrent_solve(&inst.x, &inst.y, &cfg, Some(&gt))?;
            Ok(SolveOutcome {
                iters: fit.iterations(),
                wall_time: fit.wall_time,
                converged: fit.termination != Termination::MaxIters,
                trajectory: fit
                    .trace
                    .iter()
                    .map(|r| (r.elapsed, r.model_error.unwrap_or(f64::NAN)))
                    .collect(),
                model: fit.model,
            })
        }
        SolverSpec::L1 {
            config,
            grid,
            oracle_selection,
        } => {
            let start = Instant::now();
            if grid.is_empty() {
                let mut trajectory = Vec::new();
                let result = l1::l1_solve_observed(&inst.x, &inst.y, config, |_, theta| {
                    trajectory.push((start.elapsed().as_secs_f64(), theta.distance(&inst.w_star)));
                });
                let fit = l1::accept_best_iterate(result)?;
                Ok(SolveOutcome {
                    iters: fit.iters,
                    wall_time: start.elapsed().as_secs_f64(),
                    converged: fit.converged,
                    trajectory,
                    model: fit.model,
                })
            } else {
                let beta = (inst.spec.alpha + 0.05).min(0.499);
                let selection = if *oracle_selection {
                    Selection::GroundTruth(&inst.w_star)
                } else {
                    Selection::TrimmedResidual { beta }
                };
                let fit = l1::l1_grid_fit(&inst.x, &inst.y, config, grid, selection)?;
                let wall_time = start.elapsed().as_secs_f64();
                Ok(SolveOutcome {
                    iters: fit.iters,
                    wall_time,
                    converged: fit.converged,
                    trajectory: vec![(wall_time, fit.model.distance(&inst.w_star))],
                    model: fit.model,
                })
            }
        }
    }
}

/// Per-trial record kept for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub solver: String,
    pub trial: usize,
    pub seed: u64,
    pub relative_error: f64,
    pub success: bool,
    pub wall_time: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub solver: String,
    pub cell: Cell,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_error: f64,
    pub median_wall_time: f64,
    pub median_iters: f64,
    pub records: Vec<TrialRecord>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// `||theta - w*||_2 < threshold * ||w*||_2`.
pub fn is_success(inst: &RegressionInstance, theta: &Model, threshold: f64) -> bool {
    theta.distance(&inst.w_star) < threshold * inst.w_star.norm()
}

/// Runs every solver on every trial of one cell.
pub fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<Vec<CellResult>> {
    let trials: Vec<Vec<TrialRecord>> = (0..spec.trials())
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialRecord>> {
            let ispec = spec.instance_spec(cell, trial);
            let inst = gen_instance(&ispec)?;
            spec.solvers
                .iter()
                .map(|named| {
                    let out = run_solver(&named.solver, &inst)?;
                    Ok(TrialRecord {
                        solver: named.name.clone(),
                        trial,
                        seed: ispec.seed,
                        relative_error: inst.relative_error(&out.model),
                        success: is_success(&inst, &out.model, spec.success_threshold),
                        wall_time: out.wall_time,
                        iters: out.iters,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(spec
        .solvers
        .iter()
        .enumerate()
        .map(|(k, named)| {
            let records: Vec<TrialRecord> = trials.iter().map(|t| t[k].clone()).collect();
            let successes = records.iter().filter(|r| r.success).count();
            let mut errors: Vec<f64> = records.iter().map(|r| r.relative_error).collect();
            let mut times: Vec<f64> = records.iter().map(|r| r.wall_time).collect();
            let mut iters: Vec<f64> = records.iter().map(|r| r.iters as f64).collect();
            CellResult {
                solver: named.name.clone(),
                cell: *cell,
                trials: records.len(),
                successes,
                success_rate: successes as f64 / records.len() as f64,
                median_error: median(&mut errors),
                median_wall_time: median(&mut times),
                median_iters: median(&mut iters),
                records,
            }
        })
        .collect())
}

/// Phase or sweep grid: one [`CellResult`] per (cell, solver), in cell order.
pub fn run_grid(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let cells = spec.cells();
    let per_cell: Vec<Vec<CellResult>> = cells
        .par_iter()
        .map(|cell| run_cell(spec, cell))
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn fmt_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub const GRID_HEADER: &str = "solver,alpha,n,p,sigma,scale,trials,successes,success_rate,median_error,median_wall_time,median_iters,cell_seed";

/// RFC 4180 CSV of a grid, one row per (cell, solver).
pub fn grid_csv(results: &[CellResult]) -> String {
    let mut out = String::from(GRID_HEADER);
    out.push_str("\r\n");
    for r in results {
        write!(out, "{},", csv_field(&r.solver)).unwrap();
        fmt_float(&mut out, r.cell.alpha);
        write!(out, ",{},{},", r.cell.n, r.cell.p).unwrap();
        fmt_float(&mut out, r.cell.sigma);
        out.push(',');
        fmt_float(&mut out, r.cell.scale);
        write!(out, ",{},{},", r.trials, r.successes).unwrap();
        for v in [r.success_rate, r.median_error, r.median_wall_time, r.median_iters] {
            fmt_float(&mut out, v);
            out.push(',');
        }
        write!(out, "{}\r\n", r.cell.seed).unwrap();
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One point of a solver's error-versus-time trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSample {
    pub solver: String,
    pub trial: usize,
    pub seed: u64,
    pub instance_digest: String,
    pub iter: usize,
    pub elapsed: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSummary {
    pub solver: String,
    pub trial: usize,
    pub seed: u64,
    pub instance_digest: String,
    pub wall_time: f64,
    pub iters: usize,
    pub final_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RaceResult {
    pub samples: Vec<RaceSample>,
    pub summaries: Vec<RaceSummary>,
}

/// Runs all solvers on the same instances (first cell of the axes) and
/// records error against wall-clock time. Trials run one after another so
/// timings do not compete for cores.
pub fn run_race(spec: &ExperimentSpec, with_digest: bool) -> Result<RaceResult> {
    spec.validate()?;
    let cell = spec.cells()[0];
    let mut result = RaceResult::default();
    for trial in 0..spec.trials() {
        let ispec = spec.instance_spec(&cell, trial);
        let inst = gen_instance(&ispec)?;
        let digest = if with_digest { instance_digest(&inst) } else { String::new() };
        let scale = inst.w_star.norm();
        for named in &spec.solvers {
            let out = run_solver(&named.solver, &inst)?;
            for (k, (t, err)) in out.trajectory.iter().enumerate() {
                result.samples.push(RaceSample {
                    solver: named.name.clone(),
                    trial,
                    seed: ispec.seed,
                    instance_digest: digest.clone(),
                    iter: k + 1,
                    elapsed: *t,
                    relative_error: err / scale,
                });
            }
            result.summaries.push(RaceSummary {
                solver: named.name.clone(),
                trial,
                seed: ispec.seed,
                instance_digest: digest.clone(),
                wall_time: out.wall_time,
                iters: out.iters,
                final_relative_error: inst.relative_error(&out.model),
            });
        }
    }
    Ok(result)
}

pub const RACE_HEADER: &str = "solver,trial,seed,instance_digest,iter,elapsed,relative_error";

pub fn race_csv(result: &RaceResult) -> String {
    let mut out = String::from(RACE_HEADER);
    out.push_str("\r\n");
    for s in &result.samples {
        write!(
            out,
            "{},{},{},{},{},",
            csv_field(&s.solver),
            s.trial,
            s.seed,
            s.instance_digest,
            s.iter
        )
        .unwrap();
        fmt_float(&mut out, s.elapsed);
        out.push(',');
        fmt_float(&mut out, s.relative_error);
        out.push_str("\r\n");
    }
    out
}

pub const RACE_SUMMARY_HEADER: &str =
    "solver,trial,seed,instance_digest,wall_time,iters,final_relative_error";

pub fn race_summary_csv(result: &RaceResult) -> String {
    let mut out = String::from(RACE_SUMMARY_HEADER);
    out.push_str("\r\n");
    for s in &result.summaries {
        write!(
            out,
            "{},{},{},{},",
            csv_field(&s.solver),
            s.trial,
            s.seed,
            s.instance_digest
        )
        .unwrap();
        fmt_float(&mut out, s.wall_time);
        write!(out, ",{},", s.iters).unwrap();
        fmt_float(&mut out, s.final_relative_error);
        out.push_str("\r\n");
    }
    out
}

/// Parses an experiment spec from JSON.
pub fn parse_experiment_spec(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}
