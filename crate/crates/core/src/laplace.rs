//! Laplace-corrected pseudo-sufficient statistics.
//!
//! `E[g(z)] ≈ g(z*) + ½ tr[(PΩPᵀ)⁻¹ P ∇²g P]` for `g = ZZᵀ` and `g = ZᵀZ`.
//! `P` maps `vec[Z]` to its column sums followed by its row sums, with the
//! last row sum dropped so the tangent basis is independent. `PΩPᵀ` has a
//! closed block form and `P ∇²g_ab Pᵀ` is a rank-structured block matrix, so
//! each correction entry costs O(1) after a single O(d_rows³ + d_cols³)
//! block inversion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gmgm::SufficientStats;
use crate::kroncore::{Axis, FactorPrecision};
use crate::latentpoint::FiberPoint;
use crate::linalg::{reassemble, sorted_eigen, symmetrize};

/// Relative eigenvalue floor applied when a statistic comes out indefinite.
pub const PSD_FLOOR: f64 = 1e-8;

/// `PΩPᵀ` (column block first, last row index dropped) and its inverse.
#[derive(Debug, Clone)]
pub struct TangentProjector {
    d_rows: usize,
    d_cols: usize,
    projected_precision: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl TangentProjector {
    pub fn dims(&self) -> (usize, usize) {
        (self.d_rows, self.d_cols)
    }

    /// The `(d_cols + d_rows − 1)`-square matrix `PΩPᵀ`.
    pub fn projected_precision(&self) -> &DMatrix<f64> {
        &self.projected_precision
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Inverse blocks padded back to full size with a zero last row index:
    /// `(W_cc, W_cr, W_rr)`.
    fn padded_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (dr, dc) = (self.d_rows, self.d_cols);
        let w = &self.inverse;
        let w_cc = w.view((0, 0), (dc, dc)).into_owned();
        let mut w_cr = DMatrix::zeros(dc, dr);
        let mut w_rr = DMatrix::zeros(dr, dr);
        let kept = dr - 1;
        if kept > 0 {
            w_cr.view_mut((0, 0), (dc, kept))
                .copy_from(&w.view((0, dc), (dc, kept)));
            w_rr.view_mut((0, 0), (kept, kept))
                .copy_from(&w.view((dc, dc), (kept, kept)));
        }
        (w_cc, w_cr, w_rr)
    }
}

/// Assembles `PΩPᵀ` in block form and inverts it through the Schur
/// complement of the column block.
pub fn build_projected_precision(fp: &FactorPrecision) -> Result<TangentProjector> {
    let (dr, dc) = (fp.d_rows(), fp.d_cols());
    let psi_r = fp.psi_rows();
    let psi_c = fp.psi_cols();
    let row_sums_r = DVector::from_fn(dr, |i, _| psi_r.row(i).sum());
    let row_sums_c = DVector::from_fn(dc, |j, _| psi_c.row(j).sum());
    let total_r = row_sums_r.sum();
    let total_c = row_sums_c.sum();

    let mut a = psi_c * dr as f64;
    for j in 0..dc {
        a[(j, j)] += total_r;
    }
    let kept = dr - 1;
    // Off-diagonal block entry (j, i) = (Ψ_c 1)_j + (1ᵀ Ψ_r)_i.
    let b = DMatrix::from_fn(dc, kept, |j, i| row_sums_c[j] + row_sums_r[i]);
    let mut d = psi_r.view((0, 0), (kept, kept)) * dc as f64;
    for i in 0..kept {
        d[(i, i)] += total_c;
    }

    let n = dc + kept;
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (dc, dc)).copy_from(&a);
    if kept > 0 {
        full.view_mut((0, dc), (dc, kept)).copy_from(&b);
        full.view_mut((dc, 0), (kept, dc)).copy_from(&b.transpose());
        full.view_mut((dc, dc), (kept, kept)).copy_from(&d);
    }

    let a_chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("column block of the projected precision".into()))?;
    let a_inv = a_chol.inverse();
    let inverse = if kept == 0 {
        a_inv
    } else {
        let a_inv_b = &a_inv * &b;
        let schur = symmetrize(&(&d - b.transpose() * &a_inv_b));
        let s_inv = schur
            .cholesky()
            .ok_or_else(|| {
                Error::RankDeficient("Schur complement of the projected precision".into())
            })?
            .inverse();
        let w_cr = -(&a_inv_b * &s_inv);
        let w_cc = &a_inv + &a_inv_b * &s_inv * a_inv_b.transpose();
        let mut w = DMatrix::zeros(n, n);
        w.view_mut((0, 0), (dc, dc)).copy_from(&w_cc);
        w.view_mut((0, dc), (dc, kept)).copy_from(&w_cr);
        w.view_mut((dc, 0), (kept, dc)).copy_from(&w_cr.transpose());
        w.view_mut((dc, dc), (kept, kept)).copy_from(&s_inv);
        symmetrize(&w)
    };
    Ok(TangentProjector {
        d_rows: dr,
        d_cols: dc,
        projected_precision: full,
        inverse,
    })
}

/// The Hessian of the scalar `(ZZᵀ)_ab` (rows) or `(ZᵀZ)_ab` (cols) with
/// respect to `vec[Z]`, kept implicit: it acts as `Z ↦ (Jᵃᵇ + Jᵇᵃ)Z` or
/// `Z ↦ Z(Jᵃᵇ + Jᵇᵃ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HessianEntry {
    pub axis: Axis,
    pub a: usize,
    pub b: usize,
    pub d_rows: usize,
    pub d_cols: usize,
}

pub fn hessian_entry_form(
    axis: Axis,
    entry: (usize, usize),
    dims: (usize, usize),
) -> Result<HessianEntry> {
    let (a, b) = entry;
    let (d_rows, d_cols) = dims;
    let bound = match axis {
        Axis::Rows => d_rows,
        Axis::Cols => d_cols,
    };
    if a >= bound || b >= bound {
        return Err(Error::IndexOutOfRange(format!(
            "entry ({a},{b}) for a {axis:?} Gram of size {bound}"
        )));
    }
    Ok(HessianEntry {
        axis,
        a,
        b,
        d_rows,
        d_cols,
    })
}

impl HessianEntry {
    pub fn apply(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if v.shape() != (self.d_rows, self.d_cols) {
            return Err(Error::dims("Hessian operand has the wrong shape"));
        }
        let mut out = DMatrix::zeros(self.d_rows, self.d_cols);
        match self.axis {
            Axis::Rows => {
                for k in 0..self.d_cols {
                    out[(self.b, k)] += v[(self.a, k)];
                    out[(self.a, k)] += v[(self.b, k)];
                }
            }
            Axis::Cols => {
                for k in 0..self.d_rows {
                    out[(k, self.b)] += v[(k, self.a)];
                    out[(k, self.a)] += v[(k, self.b)];
                }
            }
        }
        Ok(out)
    }

    /// Same as [`HessianEntry::apply`] on column-stacked vectors.
    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.d_rows * self.d_cols {
            return Err(Error::dims("Hessian operand has the wrong length"));
        }
        let m = DMatrix::from_column_slice(self.d_rows, self.d_cols, v.as_slice());
        let out = self.apply(&m)?;
        Ok(DVector::from_column_slice(out.as_slice()))
    }
}

/// Entries `½ tr[(PΩPᵀ)⁻¹ P Hₐᵦ Pᵀ]` for every `(a, b)` of the given axis.
pub fn correction_matrix(tp: &TangentProjector, axis: Axis) -> DMatrix<f64> {
    let (dr, dc) = (tp.d_rows, tp.d_cols);
    let (w_cc, w_cr, w_rr) = tp.padded_blocks();
    let out = match axis {
        Axis::Rows => {
            let tr_cc = w_cc.trace();
            let sigma = DVector::from_fn(dr, |i, _| w_cr.column(i).sum());
            DMatrix::from_fn(dr, dr, |a, b| {
                tr_cc + sigma[a] + sigma[b] + dc as f64 * w_rr[(a, b)]
            })
        }
        Axis::Cols => {
            let tr_rr = w_rr.trace();
            let tau = DVector::from_fn(dc, |j, _| w_cr.row(j).sum());
            DMatrix::from_fn(dc, dc, |a, b| {
                dr as f64 * w_cc[(a, b)] + tau[a] + tau[b] + tr_rr
            })
        }
    };
    symmetrize(&out)
}

/// Clamps negative eigenvalues up to `PSD_FLOOR · λ_max`; a no-op for PSD input.
pub fn psd_safeguard(m: &DMatrix<f64>) -> DMatrix<f64> {
    let m = symmetrize(m);
    let (values, vectors) = sorted_eigen(&m);
    if values.is_empty() || values[0] >= 0.0 {
        return m;
    }
    let floor = PSD_FLOOR * values.max().max(0.0);
    reassemble(&vectors, &values.map(|v| v.max(floor)))
}

/// `S_rows = Z*Z*ᵀ + C_rows`, `S_cols = Z*ᵀZ* + C_cols` (corrections omitted
/// when `correction` is false), both passed through [`psd_safeguard`]. If the
/// safeguard changes a trace, the deficit is added to the other statistic as a
/// multiple of the identity so the traces still agree.
pub fn pseudo_stats(
    fpoint: &FiberPoint,
    fp: &FactorPrecision,
    correction: bool,
) -> Result<SufficientStats> {
    let z = &fpoint.z_star;
    if z.nrows() != fp.d_rows() || z.ncols() != fp.d_cols() {
        return Err(Error::dims("fiber point does not match the model"));
    }
    let mut s_rows = z * z.transpose();
    let mut s_cols = z.transpose() * z;
    if correction {
        let tp = build_projected_precision(fp)?;
        s_rows += correction_matrix(&tp, Axis::Rows);
        s_cols += correction_matrix(&tp, Axis::Cols);
    }
    let raw_traces = (s_rows.trace(), s_cols.trace());
    let mut s_rows = psd_safeguard(&s_rows);
    let mut s_cols = psd_safeguard(&s_cols);
    let lifted_rows = s_rows.trace() - raw_traces.0;
    let lifted_cols = s_cols.trace() - raw_traces.1;
    let diff = lifted_rows - lifted_cols;
    if diff > 0.0 {
        add_identity(&mut s_cols, diff / fp.d_cols() as f64);
    } else if diff < 0.0 {
        add_identity(&mut s_rows, -diff / fp.d_rows() as f64);
    }
    Ok(SufficientStats::from_trusted(
        symmetrize(&s_rows),
        symmetrize(&s_cols),
    ))
}

fn add_identity(m: &mut DMatrix<f64>, c: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_projected_precision() {
        let tp = build_projected_precision(&FactorPrecision::identity(2, 2)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 2.0, 0.0, 4.0, 2.0, 2.0, 2.0, 4.0]);
        assert!((tp.projected_precision() - expect).amax() < 1e-14);
        let eye = tp.projected_precision() * tp.inverse();
        assert!((eye - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn single_row_reduces_to_column_block() {
        let psi_c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let fp = FactorPrecision::new(DMatrix::from_element(1, 1, 0.7), psi_c.clone()).unwrap();
        let tp = build_projected_precision(&fp).unwrap();
        let expect = psi_c + DMatrix::<f64>::identity(2, 2) * 0.7;
        assert!((tp.projected_precision() - expect).amax() < 1e-14);
    }

    #[test]
    fn hessian_index_shuffle() {
        let h = hessian_entry_form(Axis::Rows, (0, 0), (2, 2)).unwrap();
        let mut e = DMatrix::zeros(2, 2);
        e[(0, 0)] = 1.0;
        assert_eq!(h.apply(&e).unwrap(), &e * 2.0);

        let h = hessian_entry_form(Axis::Rows, (0, 1), (2, 3)).unwrap();
        for j in 0..3 {
            let mut e = DMatrix::zeros(2, 3);
            e[(0, j)] = 1.0;
            let mut want = DMatrix::zeros(2, 3);
            want[(1, j)] = 1.0;
            assert_eq!(h.apply(&e).unwrap(), want);
        }
        assert!(hessian_entry_form(Axis::Cols, (0, 3), (2, 3)).is_err());
    }

    #[test]
    fn corrections_positive_diagonal_and_trace_matched() {
        let fp = FactorPrecision::new(
            DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.0, 0.4, 1.5, -0.3, 0.0, -0.3, 1.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
        )
        .unwrap();
        let tp = build_projected_precision(&fp).unwrap();
        let cr = correction_matrix(&tp, Axis::Rows);
        let cc = correction_matrix(&tp, Axis::Cols);
        assert!(cr.diagonal().iter().all(|&v| v > 0.0));
        assert!((cr.trace() - cc.trace()).abs() < 1e-8);
    }

    #[test]
    fn safeguard_noop_on_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(psd_safeguard(&m), m);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let fixed = psd_safeguard(&bad);
        assert!(sorted_eigen(&fixed).0[0] > 0.0);
    }
}
