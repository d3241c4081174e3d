//! The fiber map: strips every direction of the data that multiplicative
//! per-row/per-column noise can reach, by double-centering `log|X|`.
//!
//! Exact zeros are untouched by multiplicative noise, so they are carried
//! through unchanged and excluded from every mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitudes below this are treated as exact zeros.
pub const ZERO_THRESHOLD: f64 = 1e-300;

const MASKED_CENTERING_MAX_SWEEPS: usize = 200_000;
const MASKED_CENTERING_RTOL: f64 = 1e-14;

#[inline]
pub fn is_zero(x: f64) -> bool {
    x.abs() < ZERO_THRESHOLD
}

/// Observed (or denoised) matrix with cached nonzero counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    entries: DMatrix<f64>,
    nnz_total: usize,
    nnz_row: Vec<usize>,
    nnz_col: Vec<usize>,
}

impl DataMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::dims("data matrix must be non-empty"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "data matrix has non-finite entries".into(),
            ));
        }
        let mut nnz_row = vec![0; entries.nrows()];
        let mut nnz_col = vec![0; entries.ncols()];
        for j in 0..entries.ncols() {
            for i in 0..entries.nrows() {
                if !is_zero(entries[(i, j)]) {
                    nnz_row[i] += 1;
                    nnz_col[j] += 1;
                }
            }
        }
        let nnz_total = nnz_row.iter().sum();
        Ok(DataMatrix {
            entries,
            nnz_total,
            nnz_row,
            nnz_col,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn d_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn d_cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn nnz_total(&self) -> usize {
        self.nnz_total
    }

    pub fn nnz_row(&self) -> &[usize] {
        &self.nnz_row
    }

    pub fn nnz_col(&self) -> &[usize] {
        &self.nnz_col
    }

    pub fn is_dense(&self) -> bool {
        self.nnz_total == self.d_rows() * self.d_cols()
    }

    pub fn mask(&self) -> DMatrix<bool> {
        self.entries.map(|v| !is_zero(v))
    }

    /// Fails with a preprocessing error naming the first empty row or column.
    pub fn require_no_empty_lines(&self) -> Result<()> {
        if let Some(i) = self.nnz_row.iter().position(|&n| n == 0) {
            return Err(Error::Preprocessing(format!(
                "row {i} is entirely zero; filter empty rows before denoising"
            )));
        }
        if let Some(j) = self.nnz_col.iter().position(|&n| n == 0) {
            return Err(Error::Preprocessing(format!(
                "column {j} is entirely zero; filter empty columns before denoising"
            )));
        }
        Ok(())
    }
}

/// How means are taken when the mask has holes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroHandling {
    /// Orthogonal projection of the masked log-values onto the complement of
    /// `{u_i + v_j}` restricted to the mask. Masked row and column means of
    /// the result are zero, the map is idempotent, and row/column noise is
    /// annihilated exactly for any zero pattern.
    #[default]
    Projection,
    /// Single pass subtracting masked row, column and grand means, with each
    /// mean over the nonzero entries only.
    OneShot,
}

/// Double-centers `l`. With `mask = None` (or an all-true mask) this is
/// `(I − 11ᵀ/d_r) L (I − 11ᵀ/d_c)`; otherwise entries outside the mask are
/// ignored and set to zero in the output.
pub fn log_double_center(l: &DMatrix<f64>, mask: Option<&DMatrix<bool>>) -> Result<DMatrix<f64>> {
    log_double_center_with(l, mask, ZeroHandling::Projection)
}

pub fn log_double_center_with(
    l: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
    mode: ZeroHandling,
) -> Result<DMatrix<f64>> {
    let (d_rows, d_cols) = l.shape();
    let mask = match mask {
        Some(m) if m.iter().all(|&b| b) => None,
        other => other,
    };
    let Some(mask) = mask else {
        return Ok(dense_double_center(l));
    };
    if mask.shape() != l.shape() {
        return Err(Error::dims("mask shape differs from matrix shape"));
    }
    let row_counts: Vec<usize> = (0..d_rows)
        .map(|i| mask.row(i).iter().filter(|&&b| b).count())
        .collect();
    let col_counts: Vec<usize> = (0..d_cols)
        .map(|j| mask.column(j).iter().filter(|&&b| b).count())
        .collect();
    if let Some(i) = row_counts.iter().position(|&n| n == 0) {
        return Err(Error::Preprocessing(format!(
            "row {i} has no entries in the mask"
        )));
    }
    if let Some(j) = col_counts.iter().position(|&n| n == 0) {
        return Err(Error::Preprocessing(format!(
            "column {j} has no entries in the mask"
        )));
    }
    let mut out = l.zip_map(mask, |v, keep| if keep { v } else { 0.0 });
    match mode {
        ZeroHandling::OneShot => {
            let row_means = masked_row_means(&out, &row_counts);
            let col_means = masked_col_means(&out, &col_counts);
            let total: usize = row_counts.iter().sum();
            let grand = out.sum() / total as f64;
            for j in 0..d_cols {
                for i in 0..d_rows {
                    if mask[(i, j)] {
                        out[(i, j)] += grand - row_means[i] - col_means[j];
                    }
                }
            }
            Ok(out)
        }
        ZeroHandling::Projection => {
            let scale = out.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let tol = MASKED_CENTERING_RTOL * scale;
            for _ in 0..MASKED_CENTERING_MAX_SWEEPS {
                let row_means = masked_row_means(&out, &row_counts);
                for j in 0..d_cols {
                    for i in 0..d_rows {
                        if mask[(i, j)] {
                            out[(i, j)] -= row_means[i];
                        }
                    }
                }
                let col_means = masked_col_means(&out, &col_counts);
                for j in 0..d_cols {
                    for i in 0..d_rows {
                        if mask[(i, j)] {
                            out[(i, j)] -= col_means[j];
                        }
                    }
                }
                // Column means are now exactly zero up to rounding.
                let worst_row = masked_row_means(&out, &row_counts).amax();
                if worst_row <= tol {
                    return Ok(out);
                }
            }
            Err(Error::Degenerate(
                "masked double-centering did not converge; the zero pattern is nearly disconnected"
                    .into(),
            ))
        }
    }
}

fn dense_double_center(l: &DMatrix<f64>) -> DMatrix<f64> {
    let (d_rows, d_cols) = l.shape();
    let row_means = DVector::from_fn(d_rows, |i, _| l.row(i).sum() / d_cols as f64);
    let col_means = DVector::from_fn(d_cols, |j, _| l.column(j).sum() / d_rows as f64);
    let grand = l.sum() / (d_rows * d_cols) as f64;
    DMatrix::from_fn(d_rows, d_cols, |i, j| {
        l[(i, j)] - row_means[i] - col_means[j] + grand
    })
}

fn masked_row_means(m: &DMatrix<f64>, counts: &[usize]) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum() / counts[i] as f64)
}

fn masked_col_means(m: &DMatrix<f64>, counts: &[usize]) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / counts[j] as f64)
}

/// `Y_ij = sgn(x_ij) · exp(centered log|x_ij|)`, zero where `x_ij` is zero.
pub fn denoise(x: &DataMatrix) -> Result<DataMatrix> {
    denoise_with(x, ZeroHandling::Projection)
}

pub fn denoise_with(x: &DataMatrix, mode: ZeroHandling) -> Result<DataMatrix> {
    x.require_no_empty_lines()?;
    let logs = x
        .entries()
        .map(|v| if is_zero(v) { 0.0 } else { v.abs().ln() });
    let mask = x.mask();
    let mask_ref = if x.is_dense() { None } else { Some(&mask) };
    let centered = log_double_center_with(&logs, mask_ref, mode)?;
    let y = DMatrix::from_fn(x.d_rows(), x.d_cols(), |i, j| {
        let v = x.entries()[(i, j)];
        if is_zero(v) {
            0.0
        } else {
            v.signum() * centered[(i, j)].exp()
        }
    });
    DataMatrix::new(y)
}

/// `diag(r_rows) · M · diag(r_cols)`.
pub fn scale_matrix(
    m: &DMatrix<f64>,
    r_rows: &DVector<f64>,
    r_cols: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if r_rows.len() != m.nrows() || r_cols.len() != m.ncols() {
        return Err(Error::dims(format!(
            "scale vectors {}+{} do not match a {}x{} matrix",
            r_rows.len(),
            r_cols.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        r_rows[i] * m[(i, j)] * r_cols[j]
    }))
}

/// Largest absolute masked row mean and column mean of `log|Y|`; both are
/// zero for any output of [`denoise`].
pub fn centering_residuals(y: &DataMatrix) -> (f64, f64) {
    let logs = y
        .entries()
        .map(|v| if is_zero(v) { 0.0 } else { v.abs().ln() });
    let row = (0..y.d_rows())
        .filter(|&i| y.nnz_row()[i] > 0)
        .map(|i| (logs.row(i).sum() / y.nnz_row()[i] as f64).abs())
        .fold(0.0, f64::max);
    let col = (0..y.d_cols())
        .filter(|&j| y.nnz_col()[j] > 0)
        .map(|j| (logs.column(j).sum() / y.nnz_col()[j] as f64).abs())
        .fold(0.0, f64::max);
    (row, col)
}
