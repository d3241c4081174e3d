//! Kronecker-sum algebra over the factor pair `(Ψ_rows, Ψ_cols)`.
//!
//! Throughout the crate a `d_rows × d_cols` matrix `M` is vectorized by
//! stacking columns, so entry `(i, j)` sits at `i + j·d_rows` and the full
//! precision is `Ω = Ψ_cols ⊗ I + I ⊗ Ψ_rows`. Nothing here ever forms `Ω`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{reassemble, relative_asymmetry, sorted_eigen, symmetrize};

/// Pair sums must exceed this fraction of the largest pair sum.
pub const DEFINITENESS_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rows,
    Cols,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Rows => Axis::Cols,
            Axis::Cols => Axis::Rows,
        }
    }
}

/// The factor pair whose Kronecker sum is the precision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorPrecisionRepr")]
pub struct FactorPrecision {
    #[serde(with = "crate::serial::matrix_rows")]
    psi_rows: DMatrix<f64>,
    #[serde(with = "crate::serial::matrix_rows")]
    psi_cols: DMatrix<f64>,
}

#[derive(Deserialize)]
struct FactorPrecisionRepr {
    #[serde(with = "crate::serial::matrix_rows")]
    psi_rows: DMatrix<f64>,
    #[serde(with = "crate::serial::matrix_rows")]
    psi_cols: DMatrix<f64>,
}

impl TryFrom<FactorPrecisionRepr> for FactorPrecision {
    type Error = Error;

    fn try_from(r: FactorPrecisionRepr) -> Result<Self> {
        FactorPrecision::new(r.psi_rows, r.psi_cols)
    }
}

impl FactorPrecision {
    /// Symmetrizes both factors and checks Kronecker-sum definiteness.
    pub fn new(psi_rows: DMatrix<f64>, psi_cols: DMatrix<f64>) -> Result<Self> {
        if !psi_rows.is_square() || !psi_cols.is_square() {
            return Err(Error::dims(format!(
                "factors must be square, got {}x{} and {}x{}",
                psi_rows.nrows(),
                psi_rows.ncols(),
                psi_cols.nrows(),
                psi_cols.ncols()
            )));
        }
        if psi_rows.is_empty() || psi_cols.is_empty() {
            return Err(Error::dims("factors must be non-empty"));
        }
        if psi_rows
            .iter()
            .chain(psi_cols.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite factor entry".into()));
        }
        let fp = FactorPrecision {
            psi_rows: symmetrize(&psi_rows),
            psi_cols: symmetrize(&psi_cols),
        };
        EigenFactor::new(&fp)?;
        Ok(fp)
    }

    pub fn identity(d_rows: usize, d_cols: usize) -> Self {
        FactorPrecision {
            psi_rows: DMatrix::identity(d_rows, d_rows),
            psi_cols: DMatrix::identity(d_cols, d_cols),
        }
    }

    pub(crate) fn from_trusted(psi_rows: DMatrix<f64>, psi_cols: DMatrix<f64>) -> Self {
        FactorPrecision { psi_rows, psi_cols }
    }

    pub fn psi_rows(&self) -> &DMatrix<f64> {
        &self.psi_rows
    }

    pub fn psi_cols(&self) -> &DMatrix<f64> {
        &self.psi_cols
    }

    pub fn psi(&self, axis: Axis) -> &DMatrix<f64> {
        match axis {
            Axis::Rows => &self.psi_rows,
            Axis::Cols => &self.psi_cols,
        }
    }

    pub fn d_rows(&self) -> usize {
        self.psi_rows.nrows()
    }

    pub fn d_cols(&self) -> usize {
        self.psi_cols.nrows()
    }

    /// `Ψ_rows·M + M·Ψ_cols`, the matricized action of the Kronecker sum.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.d_rows() || m.ncols() != self.d_cols() {
            return Err(Error::dims(format!(
                "expected {}x{} matrix, got {}x{}",
                self.d_rows(),
                self.d_cols(),
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(&self.psi_rows * m + m * &self.psi_cols)
    }

    /// `Ω_{(i,j),(k,l)} = δ_jl ψʳ_ik + δ_ik ψᶜ_jl` for row pair `(i, k)` and
    /// column pair `(j, l)`.
    pub fn entry(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<f64> {
        let (i, k) = rows;
        let (j, l) = cols;
        if i >= self.d_rows() || k >= self.d_rows() || j >= self.d_cols() || l >= self.d_cols() {
            return Err(Error::IndexOutOfRange(format!(
                "rows ({i},{k}) cols ({j},{l}) for a {}x{} model",
                self.d_rows(),
                self.d_cols()
            )));
        }
        let mut v = 0.0;
        if j == l {
            v += self.psi_rows[(i, k)];
        }
        if i == k {
            v += self.psi_cols[(j, l)];
        }
        Ok(v)
    }

    /// `(Ψ_rows + cI, Ψ_cols − cI)`; leaves the Kronecker sum unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        let mut psi_rows = self.psi_rows.clone();
        let mut psi_cols = self.psi_cols.clone();
        for i in 0..psi_rows.nrows() {
            psi_rows[(i, i)] += c;
        }
        for j in 0..psi_cols.nrows() {
            psi_cols[(j, j)] -= c;
        }
        FactorPrecision { psi_rows, psi_cols }
    }

    /// Applies the unique shift with `tr(Ψ_rows)/d_rows = tr(Ψ_cols)/d_cols`.
    pub fn trace_normalized(&self) -> Self {
        let mean_rows = self.psi_rows.trace() / self.d_rows() as f64;
        let mean_cols = self.psi_cols.trace() / self.d_cols() as f64;
        self.shifted(0.5 * (mean_cols - mean_rows))
    }

    pub fn eigen(&self) -> Result<EigenFactor> {
        EigenFactor::new(self)
    }
}

/// Cached eigendecompositions of both factors.
#[derive(Debug, Clone)]
pub struct EigenFactor {
    pub vectors_rows: DMatrix<f64>,
    pub values_rows: DVector<f64>,
    pub vectors_cols: DMatrix<f64>,
    pub values_cols: DVector<f64>,
}

impl EigenFactor {
    pub fn new(fp: &FactorPrecision) -> Result<Self> {
        let (values_rows, vectors_rows) = sorted_eigen(&fp.psi_rows);
        let (values_cols, vectors_cols) = sorted_eigen(&fp.psi_cols);
        Self::from_parts(vectors_rows, values_rows, vectors_cols, values_cols)
    }

    /// Builds from explicit eigenpairs; vectors must be orthonormal.
    pub fn from_parts(
        vectors_rows: DMatrix<f64>,
        values_rows: DVector<f64>,
        vectors_cols: DMatrix<f64>,
        values_cols: DVector<f64>,
    ) -> Result<Self> {
        if vectors_rows.nrows() != values_rows.len()
            || vectors_rows.ncols() != values_rows.len()
            || vectors_cols.nrows() != values_cols.len()
            || vectors_cols.ncols() != values_cols.len()
        {
            return Err(Error::dims("eigenvector/eigenvalue sizes disagree"));
        }
        let ef = EigenFactor {
            vectors_rows,
            values_rows,
            vectors_cols,
            values_cols,
        };
        ef.check_definite()?;
        Ok(ef)
    }

    pub fn d_rows(&self) -> usize {
        self.values_rows.len()
    }

    pub fn d_cols(&self) -> usize {
        self.values_cols.len()
    }

    fn check_definite(&self) -> Result<()> {
        let min = self.values_rows.min() + self.values_cols.min();
        let max = self.values_rows.max() + self.values_cols.max();
        let floor = DEFINITENESS_RTOL * max.max(0.0);
        if !(max > 0.0 && min > floor) {
            return Err(Error::NotPositiveDefinite {
                min_pair_sum: min,
                floor,
            });
        }
        Ok(())
    }

    /// `d_rows × d_cols` matrix of `λʳ_i + λᶜ_j`.
    pub fn pair_sums(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d_rows(), self.d_cols(), |i, j| {
            self.values_rows[i] + self.values_cols[j]
        })
    }

    /// `log det Ω = Σ_ij log(λʳ_i + λᶜ_j)`.
    pub fn logdet(&self) -> f64 {
        self.pair_sums().iter().map(|s| s.ln()).sum()
    }

    /// For `Rows`, the `d_rows × d_rows` matrix with entries
    /// `tr[Ω⁻¹ (I ⊗ Jʳ_ab)]`, i.e. `V_r diag(Σ_j 1/(λʳ_i + λᶜ_j)) V_rᵀ`.
    /// `Cols` is the analogue on the other factor.
    pub fn partial_trace_inverse(&self, axis: Axis) -> DMatrix<f64> {
        let sums = self.pair_sums();
        match axis {
            Axis::Rows => {
                let w = DVector::from_fn(self.d_rows(), |i, _| {
                    sums.row(i).iter().map(|s| 1.0 / s).sum()
                });
                reassemble(&self.vectors_rows, &w)
            }
            Axis::Cols => {
                let w = DVector::from_fn(self.d_cols(), |j, _| {
                    sums.column(j).iter().map(|s| 1.0 / s).sum()
                });
                reassemble(&self.vectors_cols, &w)
            }
        }
    }

    pub fn to_factor_precision(&self) -> FactorPrecision {
        FactorPrecision::from_trusted(
            reassemble(&self.vectors_rows, &self.values_rows),
            reassemble(&self.vectors_cols, &self.values_cols),
        )
    }

    /// Draws `Z` with `vec[Z] ~ N(0, Ω⁻¹)`, deterministic in `seed`.
    pub fn sample_latent(&self, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_latent_with(&mut rng)
    }

    pub fn sample_latent_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let sums = self.pair_sums();
        let g = DMatrix::from_fn(self.d_rows(), self.d_cols(), |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            z / sums[(i, j)].sqrt()
        });
        &self.vectors_rows * g * self.vectors_cols.transpose()
    }
}

/// Checks the symmetry invariant used by types that hold symmetric matrices.
pub(crate) fn require_symmetric(name: &str, m: &DMatrix<f64>, rtol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dims(format!("{name} must be square")));
    }
    let asym = relative_asymmetry(m);
    if asym > rtol {
        return Err(Error::InvalidParameter(format!(
            "{name} is not symmetric (relative asymmetry {asym:.2e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn apply_identity_doubles() {
        let fp = FactorPrecision::identity(2, 2);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.5, 0.25]);
        assert_eq!(fp.apply(&m).unwrap(), &m * 2.0);
    }

    #[test]
    fn apply_diagonal_action() {
        let fp = FactorPrecision::from_trusted(diag(&[1.0, 2.0]), DMatrix::zeros(2, 2));
        let out = fp.apply(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]));
    }

    #[test]
    fn apply_rejects_wrong_shape() {
        let fp = FactorPrecision::identity(2, 3);
        assert!(matches!(
            fp.apply(&DMatrix::zeros(3, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn entry_cases() {
        let fp = FactorPrecision::identity(2, 2);
        assert_eq!(fp.entry((0, 0), (0, 0)).unwrap(), 2.0);
        assert_eq!(fp.entry((0, 1), (0, 1)).unwrap(), 0.0);
        assert!(matches!(
            fp.entry((2, 0), (0, 0)),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn logdet_closed_forms() {
        let ef = FactorPrecision::identity(2, 2).eigen().unwrap();
        assert!((ef.logdet() - 4.0 * 2f64.ln()).abs() < 1e-14);

        let ef = EigenFactor::from_parts(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 3.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap();
        let expect = 2.0 * 1f64.ln() + 2.0 * 3f64.ln();
        assert!((ef.logdet() - expect).abs() < 1e-14);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let err = EigenFactor::from_parts(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-1.0, 3.0]),
            DMatrix::identity(1, 1),
            DVector::from_vec(vec![0.5]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(FactorPrecision::new(diag(&[-1.0, 2.0]), diag(&[0.5])).is_err());
    }

    #[test]
    fn partial_trace_closed_forms() {
        let ef = FactorPrecision::identity(2, 2).eigen().unwrap();
        let pt = ef.partial_trace_inverse(Axis::Rows);
        assert!((pt - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);

        let ef = EigenFactor::from_parts(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 3.0]),
        )
        .unwrap();
        let pt = ef.partial_trace_inverse(Axis::Rows);
        let expect = DMatrix::<f64>::identity(2, 2) * (0.5 + 0.25);
        assert!((pt - expect).norm() < 1e-14);
    }

    #[test]
    fn trace_normalization_balances_means() {
        let fp = FactorPrecision::new(diag(&[3.0, 5.0]), diag(&[1.0, 1.0, 1.0])).unwrap();
        let n = fp.trace_normalized();
        assert!((n.psi_rows().trace() / 2.0 - n.psi_cols().trace() / 3.0).abs() < 1e-14);
        let a = fp.eigen().unwrap().logdet();
        let b = n.eigen().unwrap().logdet();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let ef = FactorPrecision::identity(3, 4).eigen().unwrap();
        assert_eq!(ef.sample_latent(11), ef.sample_latent(11));
        assert_ne!(ef.sample_latent(11), ef.sample_latent(12));
    }

    #[test]
    fn constructor_symmetrizes() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.1, 2.0]);
        let fp = FactorPrecision::new(a, DMatrix::identity(1, 1)).unwrap();
        assert_eq!(fp.psi_rows()[(0, 1)], fp.psi_rows()[(1, 0)]);
        assert!((fp.psi_rows()[(0, 1)] - 0.2).abs() < 1e-15);
    }
}
