//! The graph estimators compared by the benchmark.

use multiaxis::gmgm::{gmgm_fit, SufficientStats};
use multiaxis::linalg::pinv_symmetric;
use multiaxis::{med_magma_fit, DataMatrix, FitConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Denoise, then EM with Laplace-corrected statistics.
    MedMagma,
    /// Kronecker-sum fit on the Gram matrices of the raw data.
    GmgmRaw,
    /// Pseudo-inverse of each raw Gram matrix on its own.
    SingleAxisBaseline,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::MedMagma,
        Method::GmgmRaw,
        Method::SingleAxisBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MedMagma => "med-magma",
            Method::GmgmRaw => "gmgm-raw",
            Method::SingleAxisBaseline => "single-axis-baseline",
        }
    }
}

/// Estimated row and column precision factors.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub psi_rows: DMatrix<f64>,
    pub psi_cols: DMatrix<f64>,
}

pub fn estimate(method: Method, x: &DMatrix<f64>, cfg: &FitConfig) -> CliResult<Estimate> {
    Ok(match method {
        Method::MedMagma => {
            let report = med_magma_fit(&DataMatrix::new(x.clone())?, cfg)?;
            Estimate {
                psi_rows: report.fitted.psi_rows().clone(),
                psi_cols: report.fitted.psi_cols().clone(),
            }
        }
        Method::GmgmRaw => {
            let sol = gmgm_fit(&SufficientStats::from_matrix(x), &cfg.gmgm)?;
            Estimate {
                psi_rows: sol.precision.psi_rows().clone(),
                psi_cols: sol.precision.psi_cols().clone(),
            }
        }
        Method::SingleAxisBaseline => Estimate {
            psi_rows: pinv_symmetric(&(x * x.transpose())),
            psi_cols: pinv_symmetric(&(x.transpose() * x)),
        },
    })
}
