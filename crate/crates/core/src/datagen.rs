//! Seeded synthetic regression instances with sparse corruptions.
//!
//! Every random component (model, design, corruption support, corruption
//! values, noise, covariance) draws from its own ChaCha stream derived from
//! the instance seed, so sweeping one knob leaves the others untouched.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ActiveSet, DataMatrix, Model};

mod stream {
    pub const MODEL: u64 = 1;
    pub const DESIGN: u64 = 2;
    pub const SUPPORT: u64 = 3;
    pub const CORRUPTION: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const COVARIANCE: u64 = 6;
    pub const ALTERNATIVE: u64 = 7;
}

fn rng_for(seed: u64, component: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(component);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    /// Uniform support, values `U(-M ||y*||_inf, M ||y*||_inf)`.
    UniformOblivious,
    /// Corrupted responses are made consistent with an alternative model.
    AdaptiveModelShift { theta_tilde: AlternativeModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternativeModel {
    /// A fresh random unit vector (sparse with the same `s*` when set).
    RandomUnit,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// Diagonal entries drawn once per instance from `U(low, high)`.
    DiagonalUniform { low: f64, high: f64 },
    /// Symmetric positive definite matrix, given by rows.
    Explicit { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub sparsity_s_star: Option<usize>,
    #[serde(default)]
    pub sigma: f64,
    pub alpha: f64,
    #[serde(default = "default_scale")]
    pub corruption_scale: f64,
    #[serde(default = "default_adversary")]
    pub adversary: Adversary,
    #[serde(default = "default_covariance")]
    pub covariance: Covariance,
    pub seed: u64,
}

fn default_scale() -> f64 {
    5.0
}

fn default_adversary() -> Adversary {
    Adversary::UniformOblivious
}

fn default_covariance() -> Covariance {
    Covariance::Identity
}

impl InstanceSpec {
    /// Dense Gaussian instance with the default corruption law.
    pub fn gaussian(p: usize, n: usize, alpha: f64, sigma: f64, seed: u64) -> Self {
        Self {
            p,
            n,
            sparsity_s_star: None,
            sigma,
            alpha,
            corruption_scale: default_scale(),
            adversary: Adversary::UniformOblivious,
            covariance: Covariance::Identity,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        if self.p == 0 || self.n == 0 {
            return bad(format!("p and n must be positive, got p={}, n={}", self.p, self.n));
        }
        // an adaptive adversary is allowed to reach one half, where recovery breaks down
        let alpha_ok = match self.adversary {
            Adversary::UniformOblivious => (0.0..0.5).contains(&self.alpha),
            Adversary::AdaptiveModelShift { .. } => (0.0..=0.5).contains(&self.alpha),
        };
        if !alpha_ok {
            return bad(format!("alpha {} out of range", self.alpha));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.corruption_scale >= 0.0 && self.corruption_scale.is_finite()) {
            return bad("corruption scale must be finite and >= 0".into());
        }
        if let Some(s) = self.sparsity_s_star {
            if s == 0 || s > self.p {
                return bad(format!("s* = {s} outside [1, {}]", self.p));
            }
        }
        if let Adversary::AdaptiveModelShift {
            theta_tilde: AlternativeModel::Explicit(t),
        } = &self.adversary
        {
            if t.len() != self.p || t.iter().any(|v| !v.is_finite()) {
                return bad("explicit alternative model must have p finite entries".into());
            }
        }
        match &self.covariance {
            Covariance::Identity => {}
            Covariance::DiagonalUniform { low, high } => {
                if !(*low >= 0.0 && low <= high && high.is_finite()) {
                    return bad("diagonal covariance needs 0 <= low <= high".into());
                }
            }
            Covariance::Explicit { rows } => {
                if rows.len() != self.p || rows.iter().any(|r| r.len() != self.p) {
                    return bad(format!("covariance must be {0}x{0}", self.p));
                }
                if covariance_factor(rows).is_none() {
                    return bad("covariance must be symmetric positive definite".into());
                }
            }
        }
        Ok(())
    }

    /// `floor(alpha n)`, the exact number of corrupted responses.
    pub fn corruption_count(&self) -> usize {
        corruption_count(self.alpha, self.n)
    }
}

pub fn corruption_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 + 1e-9).floor() as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance {
    pub spec: InstanceSpec,
    pub x: DataMatrix,
    pub y: Vec<f64>,
    pub w_star: Model,
    /// The adaptive adversary's model, when one was used.
    pub theta_tilde: Option<Model>,
    pub b: Vec<f64>,
    pub eps: Vec<f64>,
    pub clean_set: ActiveSet,
}

impl RegressionInstance {
    /// `||theta - w*||_2 / ||w*||_2`.
    pub fn relative_error(&self, theta: &Model) -> f64 {
        theta.distance(&self.w_star) / self.w_star.norm()
    }

    pub fn ground_truth(&self) -> crate::solver::GroundTruth {
        crate::solver::GroundTruth {
            model: self.w_star.clone(),
            corruption: Some(self.b.clone()),
        }
    }

    /// Corrupted sample indices.
    pub fn corruption_support(&self) -> ActiveSet {
        self.clean_set.complement(self.x.n())
    }
}

/// Random unit vector, uniform on the sphere or on a random `s`-subset of
/// coordinates.
fn random_unit(p: usize, sparsity: Option<usize>, rng: &mut ChaCha20Rng) -> Model {
    let mut v = vec![0.0; p];
    match sparsity {
        Some(s) => {
            let mut support = index::sample(rng, p, s).into_vec();
            support.sort_unstable();
            for i in support {
                v[i] = StandardNormal.sample(rng);
            }
        }
        None => v.iter_mut().for_each(|c| *c = StandardNormal.sample(rng)),
    }
    let norm = crate::linalg::norm2(&v);
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|c| *c /= norm);
    }
    Model::new(v)
}

/// Lower Cholesky factor of an explicit covariance, if it is SPD.
fn covariance_factor(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let p = rows.len();
    let sigma = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
    if (&sigma - sigma.transpose()).amax() > 1e-10 * sigma.amax().max(1.0) {
        return None;
    }
    sigma.cholesky().map(|c| c.unpack())
}

fn uniform_support(n: usize, count: usize, seed: u64) -> ActiveSet {
    let mut rng = rng_for(seed, stream::SUPPORT);
    ActiveSet::from_unsorted(index::sample(&mut rng, n, count).into_vec())
}

/// `b_i = <x_i, theta_tilde - w*>` on `support`, zero elsewhere.
pub fn adaptive_corruption_on(
    x: &DataMatrix,
    w_star: &Model,
    theta_tilde: &Model,
    support: &ActiveSet,
) -> Vec<f64> {
    let shift: Vec<f64> = theta_tilde
        .as_slice()
        .iter()
        .zip(w_star.as_slice())
        .map(|(t, w)| t - w)
        .collect();
    let mut b = vec![0.0; x.n()];
    for i in support.iter() {
        b[i] = crate::linalg::dot(x.sample(i), &shift);
    }
    b
}

/// Adaptive adversary: after seeing `X` and `w*`, corrupts a seeded uniform
/// `floor(alpha n)`-subset so that those responses follow `theta_tilde`.
pub fn adaptive_adversary(
    x: &DataMatrix,
    w_star: &Model,
    theta_tilde: &Model,
    alpha: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=0.5).contains(&alpha) {
        return Err(Error::BadSpec(format!("alpha {alpha} outside [0, 0.5]")));
    }
    if w_star.len() != x.p() || theta_tilde.len() != x.p() {
        return Err(Error::DimensionMismatch("model length differs from p".into()));
    }
    let support = uniform_support(x.n(), corruption_count(alpha, x.n()), seed);
    Ok(adaptive_corruption_on(x, w_star, theta_tilde, &support))
}

/// Draws the instance described by `spec`. Deterministic in `spec.seed`.
pub fn gen_instance(spec: &InstanceSpec) -> Result<RegressionInstance> {
    spec.validate()?;
    let (p, n) = (spec.p, spec.n);

    let w_star = random_unit(p, spec.sparsity_s_star, &mut rng_for(spec.seed, stream::MODEL));

    let mut design = rng_for(spec.seed, stream::DESIGN);
    let mut entries: Vec<f64> = (0..p * n).map(|_| StandardNormal.sample(&mut design)).collect();
    match &spec.covariance {
        Covariance::Identity => {}
        Covariance::DiagonalUniform { low, high } => {
            let mut cov = rng_for(spec.seed, stream::COVARIANCE);
            let scale: Vec<f64> = (0..p)
                .map(|_| {
                    let d: f64 = if low == high { *low } else { cov.random_range(*low..*high) };
                    d.sqrt()
                })
                .collect();
            for col in entries.chunks_mut(p) {
                col.iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
            }
        }
        Covariance::Explicit { rows } => {
            let l = covariance_factor(rows).expect("validated");
            let z = DMatrix::from_vec(p, n, entries);
            entries = (l * z).data.into();
        }
    }
    let x = DataMatrix::from_column_major(p, n, entries)?;

    let y_star: Vec<f64> = x.predict(&w_star).iter().copied().collect();
    let support = uniform_support(n, spec.corruption_count(), spec.seed);

    let (b, theta_tilde) = match &spec.adversary {
        Adversary::UniformOblivious => {
            let bound = spec.corruption_scale * y_star.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut rng = rng_for(spec.seed, stream::CORRUPTION);
            let mut b = vec![0.0; n];
            for i in support.iter() {
                b[i] = rng.random_range(-bound..=bound);
            }
            (b, None)
        }
        Adversary::AdaptiveModelShift { theta_tilde } => {
            let tilde = match theta_tilde {
                AlternativeModel::Explicit(t) => Model::new(t.clone()),
                AlternativeModel::RandomUnit => random_unit(
                    p,
                    spec.sparsity_s_star,
                    &mut rng_for(spec.seed, stream::ALTERNATIVE),
                ),
            };
            (adaptive_corruption_on(&x, &w_star, &tilde, &support), Some(tilde))
        }
    };

    let eps: Vec<f64> = if spec.sigma > 0.0 {
        let mut rng = rng_for(spec.seed, stream::NOISE);
        (0..n)
            .map(|_| spec.sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect()
    } else {
        vec![0.0; n]
    };

    let y = (0..n).map(|i| y_star[i] + b[i] + eps[i]).collect();
    Ok(RegressionInstance {
        spec: spec.clone(),
        x,
        y,
        w_star,
        theta_tilde,
        b,
        eps,
        clean_set: support.complement(n),
    })
}
