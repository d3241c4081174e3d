//! Learning row and column dependency graphs from a single data matrix whose
//! entries are corrupted by strictly positive per-row and per-column scale
//! factors.
//!
//! The pipeline is: remove the noise-corrupted directions with [`denoise`],
//! then alternate between finding the most likely latent point in the noise
//! fiber ([`latentpoint`]), forming Laplace-corrected Gram statistics
//! ([`laplace`]) and refitting an unregularized Kronecker-sum Gaussian
//! ([`gmgm`]). [`emdriver`] ties these together. [`synth`], [`graphmetrics`]
//! and [`ingest`] provide the evaluation harness.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod emdriver;
pub mod error;
pub mod gmgm;
pub mod graphmetrics;
pub mod ingest;
pub mod kroncore;
pub mod laplace;
pub mod latentpoint;
pub mod linalg;
pub mod seeds;
pub mod serial;
pub mod synth;

pub use denoise::{denoise, log_double_center, DataMatrix};
pub use emdriver::{med_magma_fit, FitConfig, FitReport, IterationRecord};
pub use error::{Error, Result};
pub use gmgm::{gmgm_fit, grad_nll, nll, GmgmConfig, GmgmSolution, SufficientStats};
pub use graphmetrics::{
    ami, assortativity, best_ami_sweep, community_detect, pr_curve_aupr, threshold_topk, Adjacency,
};
pub use ingest::Dataset;
pub use kroncore::{Axis, EigenFactor, FactorPrecision};
pub use laplace::{pseudo_stats, TangentProjector};
pub use latentpoint::{find_z_star, FiberPoint, FlipFlopConfig, NoiseFactors, QpConfig};
pub use serial::SCHEMA_VERSION;
pub use synth::{generate_experiment, SynthBundle, SynthConfig};
