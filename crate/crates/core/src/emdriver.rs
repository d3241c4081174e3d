//! Expectation maximization over the denoised data: find the fiber point,
//! form Laplace-corrected statistics, refit, repeat.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::denoise::{denoise, DataMatrix};
use crate::error::{Error, Result};
use crate::gmgm::{gmgm_fit, GmgmConfig};
use crate::kroncore::FactorPrecision;
use crate::laplace::pseudo_stats;
use crate::latentpoint::{find_z_star, FlipFlopConfig, NoiseFactors};
use crate::linalg::max_abs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Converged once the largest relative factor change drops below this.
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub flip_flop: FlipFlopConfig,
    pub gmgm: GmgmConfig,
    /// Include the half-trace curvature term in the statistics.
    pub correction_enabled: bool,
    /// Recorded for reproducibility; the fit itself draws no random numbers.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            em_tol: 1e-4,
            em_max_iters: 50,
            flip_flop: FlipFlopConfig::default(),
            gmgm: GmgmConfig::default(),
            correction_enabled: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [
            ("em_tol", self.em_tol),
            ("flip_flop.tol", self.flip_flop.tol),
            ("flip_flop.qp.tol", self.flip_flop.qp.tol),
            ("gmgm.tol", self.gmgm.tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.gmgm.eig_floor >= 0.0) {
            return Err(Error::InvalidParameter(
                "gmgm.eig_floor must be non-negative".into(),
            ));
        }
        let iters = [
            ("em_max_iters", self.em_max_iters),
            ("flip_flop.max_sweeps", self.flip_flop.max_sweeps),
            ("flip_flop.qp.max_iters", self.flip_flop.qp.max_iters),
            ("gmgm.max_iters", self.gmgm.max_iters),
        ];
        for (name, v) in iters {
            if v == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub change_rows: f64,
    pub change_cols: f64,
    /// `z*ᵀΩz*` under the precision used for this E-step.
    pub z_objective: f64,
    pub flip_flop_sweeps: usize,
    pub gmgm_iterations: usize,
    pub gmgm_grad_norm: f64,
    /// Excluded from serialized reports so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl IterationRecord {
    pub fn change(&self) -> f64 {
        self.change_rows.max(self.change_cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fitted: FactorPrecision,
    pub iterations: usize,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
    /// Trace-normalized factors after every iteration.
    pub history: Vec<FactorPrecision>,
    /// Noise factors of the final fiber point.
    pub noise: NoiseFactors,
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    max_abs(&(new - old)) / max_abs(new).max(f64::MIN_POSITIVE)
}

/// Runs the full pipeline on raw data `x`.
pub fn med_magma_fit(x: &DataMatrix, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let y = denoise(x)?;
    fit_denoised(&y, cfg)
}

/// EM on already-denoised data.
pub fn fit_denoised(y: &DataMatrix, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let (d_rows, d_cols) = (y.d_rows(), y.d_cols());
    let mut fp = FactorPrecision::identity(d_rows, d_cols);
    let mut noise = NoiseFactors::ones(d_rows, d_cols);
    let mut records = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.em_max_iters {
        let started = Instant::now();
        let wrap = |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        };
        let fiber = find_z_star(y, &fp, Some(&noise), &cfg.flip_flop).map_err(wrap)?;
        let stats = pseudo_stats(&fiber, &fp, cfg.correction_enabled).map_err(wrap)?;
        let sol = gmgm_fit(&stats, &cfg.gmgm).map_err(wrap)?;
        let next = sol.precision.trace_normalized();
        let record = IterationRecord {
            iteration,
            change_rows: relative_change(next.psi_rows(), fp.psi_rows()),
            change_cols: relative_change(next.psi_cols(), fp.psi_cols()),
            z_objective: fiber.objective,
            flip_flop_sweeps: fiber.sweeps,
            gmgm_iterations: sol.iterations,
            gmgm_grad_norm: sol.grad_norm,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        let change = record.change();
        records.push(record);
        history.push(next.clone());
        noise = fiber.factors;
        fp = next;
        if change < cfg.em_tol {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        fitted: fp,
        iterations: records.len(),
        converged,
        records,
        history,
        noise,
    })
}
