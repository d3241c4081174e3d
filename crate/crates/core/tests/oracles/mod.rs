//! Dense reference implementations shared by the integration tests. Each one
//! assembles the object it checks from first principles (full Kronecker
//! products, explicit projection matrices, finite differences).

#![allow(dead_code)]

use multiaxis::kroncore::{Axis, FactorPrecision};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ / n + shift·I`, comfortably positive definite.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n + 2);
    &g * g.transpose() / (n as f64) + DMatrix::identity(n, n) * shift
}

pub fn random_factor(rng: &mut ChaCha8Rng, dr: usize, dc: usize) -> FactorPrecision {
    FactorPrecision::new(random_spd(rng, dr, 0.5), random_spd(rng, dc, 0.5)).unwrap()
}

pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// `Ψ_cols ⊗ I + I ⊗ Ψ_rows` via explicit Kronecker products.
pub fn dense_omega(fp: &FactorPrecision) -> DMatrix<f64> {
    let (dr, dc) = (fp.d_rows(), fp.d_cols());
    fp.psi_cols().kronecker(&DMatrix::identity(dr, dr))
        + DMatrix::<f64>::identity(dc, dc).kronecker(fp.psi_rows())
}

/// Rows of `P`: one per column sum, then one per row sum except the last.
pub fn dense_projector(dr: usize, dc: usize) -> DMatrix<f64> {
    let n = dc + dr - 1;
    let mut p = DMatrix::zeros(n, dr * dc);
    for j in 0..dc {
        for i in 0..dr {
            p[(j, i + j * dr)] = 1.0;
        }
    }
    for i in 0..dr - 1 {
        for j in 0..dc {
            p[(dc + i, i + j * dr)] = 1.0;
        }
    }
    p
}

/// `g(Z) = (ZZᵀ)_ab` or `(ZᵀZ)_ab`, evaluated by direct summation.
pub fn gram_entry(z: &DMatrix<f64>, axis: Axis, a: usize, b: usize) -> f64 {
    match axis {
        Axis::Rows => (0..z.ncols()).map(|k| z[(a, k)] * z[(b, k)]).sum(),
        Axis::Cols => (0..z.nrows()).map(|k| z[(k, a)] * z[(k, b)]).sum(),
    }
}

/// Hessian of a quadratic by second differences at zero; exact for
/// quadratics since all probes are 0/1 vectors.
pub fn dense_hessian(axis: Axis, a: usize, b: usize, dr: usize, dc: usize) -> DMatrix<f64> {
    let n = dr * dc;
    let eval = |p: Option<usize>, q: Option<usize>| {
        let mut z = DMatrix::zeros(dr, dc);
        for idx in [p, q].into_iter().flatten() {
            z[(idx % dr, idx / dr)] += 1.0;
        }
        gram_entry(&z, axis, a, b)
    };
    DMatrix::from_fn(n, n, |p, q| {
        eval(Some(p), Some(q)) - eval(Some(p), None) - eval(None, Some(q)) + eval(None, None)
    })
}

/// `½ tr[(PΩPᵀ)⁻¹ P H Pᵀ]` for every entry of one axis.
pub fn dense_correction(fp: &FactorPrecision, axis: Axis) -> DMatrix<f64> {
    let (dr, dc) = (fp.d_rows(), fp.d_cols());
    let p = dense_projector(dr, dc);
    let w = (&p * dense_omega(fp) * p.transpose())
        .try_inverse()
        .unwrap();
    let d = match axis {
        Axis::Rows => dr,
        Axis::Cols => dc,
    };
    DMatrix::from_fn(d, d, |a, b| {
        let h = dense_hessian(axis, a, b, dr, dc);
        0.5 * (&w * &p * h * p.transpose()).trace()
    })
}

/// Partial traces of the dense `Ω⁻¹` over the other axis.
pub fn dense_partial_trace(fp: &FactorPrecision, axis: Axis) -> DMatrix<f64> {
    let (dr, dc) = (fp.d_rows(), fp.d_cols());
    let inv = dense_omega(fp).try_inverse().unwrap();
    match axis {
        Axis::Rows => DMatrix::from_fn(dr, dr, |i, k| {
            (0..dc).map(|j| inv[(i + j * dr, k + j * dr)]).sum()
        }),
        Axis::Cols => DMatrix::from_fn(dc, dc, |j, l| {
            (0..dr).map(|i| inv[(i + j * dr, i + l * dr)]).sum()
        }),
    }
}

/// Central differences of `f` at each entry of a symmetric matrix, moving
/// `(i, j)` and `(j, i)` together; diagonal entries are halved so the result
/// matches the symmetric-matrix gradient convention `∂f/∂M_ij`.
pub fn fd_symmetric_gradient(
    m: &DMatrix<f64>,
    h: f64,
    mut f: impl FnMut(&DMatrix<f64>) -> f64,
) -> DMatrix<f64> {
    let n = m.nrows();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut plus = m.clone();
            let mut minus = m.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            if i != j {
                plus[(j, i)] += h;
                minus[(j, i)] -= h;
            }
            let d = (f(&plus) - f(&minus)) / (2.0 * h);
            let v = if i == j { d } else { d / 2.0 };
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
