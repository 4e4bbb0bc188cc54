//! `torrent`: generate instances, fit them, run phase grids, races and
//! subset-spectrum probes.
//!
//! Exit codes: 0 success, 1 solver did not converge or failed, 2 usage or IO.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use torrent_core::bench::{
    grid_csv, race_csv, race_summary_csv, run_grid, run_race, ExperimentKind, ExperimentSpec,
    SolverSpec,
};
use torrent_core::datagen::{Adversary, AlternativeModel, Covariance};
use torrent_core::io::{read_instance, write_instance};
use torrent_core::l1;
use torrent_core::probe::{
    check_convergence_condition, estimate_subset_spectrum, ConditionVariant, SpectrumMode,
    DEFAULT_SAMPLED_TRIALS,
};
use torrent_core::solver::{FitResult, Termination};
use torrent_core::{
    gen_instance, torrent_hd_solve, torrent_solve, Error, InstanceSpec, SolverConfig, Variant,
};

/// Environment variable fixing the size of the work pool.
const THREADS_ENV: &str = "TORRENT_THREADS";

#[derive(Parser)]
#[command(name = "torrent", version, about = "Robust regression by residual hard thresholding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance (meta.json + data.csv)
    Gen(GenArgs),
    /// Fit one instance and write the result and its iteration trace
    Fit(FitArgs),
    /// Success-rate grid (phase or sweep experiment spec)
    Phase(ExperimentArgs),
    /// Error-versus-time trajectories on shared instances
    Race(ExperimentArgs),
    /// Subset eigenvalue constants and convergence conditions
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryKind {
    Oblivious,
    Adaptive,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// JSON instance spec; flags below are ignored when given
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 5.0)]
    corruption_scale: f64,
    #[arg(long)]
    sparsity_s_star: Option<usize>,
    #[arg(long, value_enum, default_value_t = AdversaryKind::Oblivious)]
    adversary: AdversaryKind,
    /// Diagonal covariance with entries drawn from U(low, high), as `low,high`
    #[arg(long, value_delimiter = ',')]
    diagonal_covariance: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    /// Instance directory written by `gen`
    instance: PathBuf,
    /// Directory for fit.json and trace.csv; prints the result when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON solver config; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_change_tol: Option<f64>,
    #[arg(long)]
    sparsity: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec
    #[arg(long)]
    spec: PathBuf,
    /// Base seed (overrides the spec's)
    #[arg(long)]
    seed: u64,
    /// Override trials per cell
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory; CSV goes to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Fc,
    FcDenseNoise,
    Gd,
    Hyb,
    Hd,
}

impl From<ConditionArg> for ConditionVariant {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::Fc => ConditionVariant::Fc,
            ConditionArg::FcDenseNoise => ConditionVariant::FcDenseNoise,
            ConditionArg::Gd => ConditionVariant::Gd,
            ConditionArg::Hyb => ConditionVariant::Hyb,
            ConditionArg::Hd => ConditionVariant::Hd,
        }
    }
}

#[derive(Args)]
struct ProbeArgs {
    /// Instance directory written by `gen`
    instance: PathBuf,
    /// Subset fractions to probe (repeatable)
    #[arg(long, num_args = 1..)]
    gamma: Vec<f64>,
    /// Evaluate a convergence condition at `beta` (probes beta and 1 - beta)
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    condition: Option<ConditionArg>,
    /// Sample this many subsets instead of enumerating
    #[arg(long)]
    sampled: Option<Option<usize>>,
    #[arg(long, default_value_t = 0)]
    probe_seed: u64,
    /// Restricted constants over s-sparse directions
    #[arg(long)]
    sparsity: Option<usize>,
    /// GD step overriding 1 / Lambda_{1-beta}
    #[arg(long)]
    eta: Option<f64>,
}

/// Error type carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SingularSystem | Error::NotConverged(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_gen(args: GenArgs) -> CliResult {
    let spec = match &args.spec {
        Some(path) => {
            let mut spec: InstanceSpec = read_json(path)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            spec
        }
        None => InstanceSpec {
            p: args.p,
            n: args.n,
            sparsity_s_star: args.sparsity_s_star,
            sigma: args.sigma,
            alpha: args.alpha,
            corruption_scale: args.corruption_scale,
            adversary: match args.adversary {
                AdversaryKind::Oblivious => Adversary::UniformOblivious,
                AdversaryKind::Adaptive => Adversary::AdaptiveModelShift {
                    theta_tilde: AlternativeModel::RandomUnit,
                },
            },
            covariance: match args.diagonal_covariance.as_deref() {
                Some([low, high]) => Covariance::DiagonalUniform {
                    low: *low,
                    high: *high,
                },
                None => Covariance::Identity,
                Some(_) => {
                    return Err(Failure {
                        code: 2,
                        message: "--diagonal-covariance takes exactly `low,high`".into(),
                    })
                }
            },
            seed: args.seed.ok_or_else(|| Failure {
                code: 2,
                message: "--seed is required unless --spec is given".into(),
            })?,
        },
    };
    let inst = gen_instance(&spec)?;
    let meta = write_instance(&args.out, &inst)?;
    println!("{}", meta.data_sha256);
    Ok(())
}

fn fit_config(args: &FitArgs) -> CliResult<SolverConfig> {
    let mut cfg: SolverConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SolverConfig::default(),
    };
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if args.step_size.is_some() {
        cfg.step_size = args.step_size;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = args.rel_change_tol {
        cfg.rel_change_tol = v;
    }
    if args.sparsity.is_some() {
        cfg.sparsity = args.sparsity;
    }
    Ok(cfg)
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:.16e}").unwrap();
    }
}

fn trace_csv(fit: &FitResult) -> String {
    let mut out = String::from(
        "iter,update_kind,active_residual_norm,model_error,corruption_mass,set_churn,elapsed\r\n",
    );
    for r in &fit.trace {
        let kind = serde_json::to_value(r.update_kind).expect("enum serializes");
        write!(
            out,
            "{},{},{:.16e},",
            r.iter,
            kind.as_str().unwrap_or_default(),
            r.active_residual_norm
        )
        .unwrap();
        fmt_opt(&mut out, r.model_error);
        out.push(',');
        fmt_opt(&mut out, r.corruption_mass);
        write!(out, ",{},{:.16e}\r\n", r.set_churn, r.elapsed).unwrap();
    }
    out
}

fn cmd_fit(args: FitArgs) -> CliResult {
    let inst = read_instance(&args.instance).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", args.instance.display()),
    })?;
    let cfg = fit_config(&args)?;
    let gt = inst.ground_truth();
    let fit = if cfg.variant == Variant::Hd {
        torrent_hd_solve(&inst.x, &inst.y, &cfg, Some(&gt))?
    } else {
        torrent_solve(&inst.x, &inst.y, &cfg, Some(&gt))?
    };
    let report = json!({
        "config": cfg,
        "relative_error": inst.relative_error(&fit.model),
        "result": fit,
    });
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_file(&dir.join("fit.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            write_file(&dir.join("trace.csv"), &trace_csv(&fit))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if fit.termination == Termination::MaxIters {
        return Err(Failure {
            code: 1,
            message: format!("no convergence within {} iterations", cfg.max_iters),
        });
    }
    Ok(())
}

fn load_experiment(args: &ExperimentArgs) -> CliResult<ExperimentSpec> {
    let mut spec: ExperimentSpec = read_json(&args.spec)?;
    spec.seed = args.seed;
    if args.trials.is_some() {
        spec.trials_per_cell = args.trials;
    }
    spec.validate()?;
    Ok(spec)
}

/// Metadata stored next to experiment CSVs.
fn experiment_meta(spec: &ExperimentSpec) -> serde_json::Value {
    let l1_solvers: Vec<_> = spec
        .solvers
        .iter()
        .filter_map(|s| match &s.solver {
            SolverSpec::L1 { config, grid, .. } => Some(json!({
                "name": s.name,
                "solver_id": l1::SOLVER_ID,
                "lambda_grid": if grid.is_empty() { vec![config.lambda] } else { grid.clone() },
            })),
            SolverSpec::Torrent { .. } => None,
        })
        .collect();
    json!({
        "tool": "torrent",
        "version": env!("CARGO_PKG_VERSION"),
        "spec": spec,
        "trials_per_cell": spec.trials(),
        "l1_solvers": l1_solvers,
        "threads": rayon::current_num_threads(),
    })
}

fn emit(out: Option<&Path>, files: &[(&str, String)], meta: serde_json::Value) -> CliResult {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in files {
                write_file(&dir.join(name), body)?;
            }
            write_file(&dir.join("meta.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))
        }
        None => {
            print!("{}", files[0].1);
            Ok(())
        }
    }
}

fn cmd_phase(args: ExperimentArgs) -> CliResult {
    let spec = load_experiment(&args)?;
    if spec.kind == ExperimentKind::Race {
        return Err(Failure {
            code: 2,
            message: "race specs run with `torrent race`".into(),
        });
    }
    let results = run_grid(&spec)?;
    emit(args.out.as_deref(), &[("grid.csv", grid_csv(&results))], experiment_meta(&spec))
}

fn cmd_race(args: ExperimentArgs) -> CliResult {
    let spec = load_experiment(&args)?;
    let race = run_race(&spec, true)?;
    emit(
        args.out.as_deref(),
        &[
            ("race.csv", race_csv(&race)),
            ("race_summary.csv", race_summary_csv(&race)),
        ],
        experiment_meta(&spec),
    )
}

fn cmd_probe(args: ProbeArgs) -> CliResult {
    let inst = read_instance(&args.instance).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", args.instance.display()),
    })?;
    let mode = match args.sampled {
        None => SpectrumMode::Exact,
        Some(trials) => SpectrumMode::Sampled {
            trials: trials.unwrap_or(DEFAULT_SAMPLED_TRIALS),
            seed: args.probe_seed,
        },
    };
    let mut gammas = args.gamma.clone();
    if let Some(beta) = args.beta {
        gammas.extend([beta, 1.0 - beta]);
    }
    if gammas.is_empty() {
        return Err(Failure {
            code: 2,
            message: "give at least one --gamma or --beta".into(),
        });
    }
    let reports = gammas
        .iter()
        .map(|&g| estimate_subset_spectrum(&inst.x, g, mode, args.sparsity))
        .collect::<Result<Vec<_>, _>>()?;
    let verdict = match (args.beta, args.condition) {
        (Some(beta), Some(c)) => Some(check_convergence_condition(&reports, beta, c.into(), args.eta)?),
        (None, Some(_)) => {
            return Err(Failure {
                code: 2,
                message: "--condition needs --beta".into(),
            })
        }
        _ => None,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "reports": reports, "verdict": verdict }))?
    );
    Ok(())
}

fn configure_pool() -> CliResult {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value.parse().map_err(|_| Failure {
            code: 2,
            message: format!("{THREADS_ENV} must be a positive integer, got `{value}`"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure {
                code: 2,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_pool().and_then(|()| match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Phase(a) => cmd_phase(a),
        Command::Race(a) => cmd_race(a),
        Command::Probe(a) => cmd_probe(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("torrent: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
