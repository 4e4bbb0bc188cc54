//! Robust least-squares regression under sparse adversarial corruption of
//! the responses, by alternating a model update on an active set with hard
//! thresholding of the residuals.
//!
//! The crate covers the fully corrective (FC), gradient (GD), hybrid (HYB)
//! and sparse high-dimensional (HD) update rules, a seeded instance
//! generator, subset-eigenvalue probes, an L1 basis-pursuit baseline, and the
//! experiment harness used by the `torrent` command-line tool.

pub mod bench;
pub mod datagen;
pub mod error;
pub mod hd;
pub mod io;
pub mod l1;
pub mod linalg;
pub mod probe;
pub mod solver;
pub mod threshold;

pub use datagen::{gen_instance, InstanceSpec, RegressionInstance};
pub use error::{Error, Result};
pub use linalg::{ActiveSet, DataMatrix, Model};
pub use solver::{torrent_hd_solve, torrent_solve, FitResult, GroundTruth, SolverConfig, Variant};
