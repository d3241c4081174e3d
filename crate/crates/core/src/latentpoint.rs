//! The most likely latent point in the noise fiber of a denoised matrix.
//!
//! Every point of the fiber is `diag(r_rows) · Y · diag(r_cols)` with both
//! scale vectors positive and of unit product. For one axis held fixed, the
//! objective `zᵀΩz` is a quadratic form in the other axis's scale vector; the
//! two resulting product-constrained problems are solved alternately.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::denoise::{scale_matrix, DataMatrix};
use crate::error::{Error, Result};
use crate::kroncore::{Axis, FactorPrecision};
use crate::linalg::{sorted_eigen, symmetrize};

const UNIT_PRODUCT_TOL: f64 = 1e-10;

/// Positive per-row and per-column scales, each with unit product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseFactorsRepr")]
pub struct NoiseFactors {
    #[serde(with = "crate::serial::vector")]
    r_rows: DVector<f64>,
    #[serde(with = "crate::serial::vector")]
    r_cols: DVector<f64>,
}

#[derive(Deserialize)]
struct NoiseFactorsRepr {
    #[serde(with = "crate::serial::vector")]
    r_rows: DVector<f64>,
    #[serde(with = "crate::serial::vector")]
    r_cols: DVector<f64>,
}

impl TryFrom<NoiseFactorsRepr> for NoiseFactors {
    type Error = Error;

    fn try_from(r: NoiseFactorsRepr) -> Result<Self> {
        NoiseFactors::new(r.r_rows, r.r_cols)
    }
}

impl NoiseFactors {
    pub fn new(r_rows: DVector<f64>, r_cols: DVector<f64>) -> Result<Self> {
        for (name, r) in [("r_rows", &r_rows), ("r_cols", &r_cols)] {
            if r.is_empty() {
                return Err(Error::dims(format!("{name} is empty")));
            }
            if r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive"
                )));
            }
            let log_prod: f64 = r.iter().map(|v| v.ln()).sum();
            if (log_prod.exp() - 1.0).abs() > UNIT_PRODUCT_TOL {
                return Err(Error::InvalidParameter(format!(
                    "{name} must have unit product (log product {log_prod:.3e})"
                )));
            }
        }
        Ok(NoiseFactors { r_rows, r_cols })
    }

    pub fn ones(d_rows: usize, d_cols: usize) -> Self {
        NoiseFactors {
            r_rows: DVector::from_element(d_rows, 1.0),
            r_cols: DVector::from_element(d_cols, 1.0),
        }
    }

    /// Divides each vector by its geometric mean.
    pub fn normalized(r_rows: &DVector<f64>, r_cols: &DVector<f64>) -> Result<Self> {
        Self::new(unit_product(r_rows)?, unit_product(r_cols)?)
    }

    pub fn r_rows(&self) -> &DVector<f64> {
        &self.r_rows
    }

    pub fn r_cols(&self) -> &DVector<f64> {
        &self.r_cols
    }

    pub fn get(&self, axis: Axis) -> &DVector<f64> {
        match axis {
            Axis::Rows => &self.r_rows,
            Axis::Cols => &self.r_cols,
        }
    }

    /// `diag(r_rows) · M · diag(r_cols)`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        scale_matrix(m, &self.r_rows, &self.r_cols)
    }
}

fn unit_product(r: &DVector<f64>) -> Result<DVector<f64>> {
    if r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "scale factors must be strictly positive".into(),
        ));
    }
    let mean_log = r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64;
    Ok(r.map(|v| (v.ln() - mean_log).exp()))
}

/// A minimizer of `zᵀΩz` over the fiber.
#[derive(Debug, Clone)]
pub struct FiberPoint {
    pub z_star: DMatrix<f64>,
    pub factors: NoiseFactors,
    /// `z*ᵀ Ω z*`.
    pub objective: f64,
    /// Objective at the start and after every half-step.
    pub trace: Vec<f64>,
    pub sweeps: usize,
}

/// `zᵀΩz` for `z = vec[Z]`.
pub fn quadratic_value(fp: &FactorPrecision, z: &DMatrix<f64>) -> Result<f64> {
    Ok(z.component_mul(&fp.apply(z)?).sum())
}

/// The matrix `Ω̃` with `rᵀΩ̃r = zᵀΩz` for `Z = diag(r) Y diag(fixed)` (rows)
/// or `Z = diag(fixed) Y diag(r)` (cols).
pub fn aggregate_quadratic(
    y: &DMatrix<f64>,
    fp: &FactorPrecision,
    fixed: &DVector<f64>,
    axis: Axis,
) -> Result<DMatrix<f64>> {
    if y.nrows() != fp.d_rows() || y.ncols() != fp.d_cols() {
        return Err(Error::dims(format!(
            "data is {}x{}, model is {}x{}",
            y.nrows(),
            y.ncols(),
            fp.d_rows(),
            fp.d_cols()
        )));
    }
    let expected = match axis {
        Axis::Rows => fp.d_cols(),
        Axis::Cols => fp.d_rows(),
    };
    if fixed.len() != expected {
        return Err(Error::dims(format!(
            "fixed vector has length {}, expected {expected}",
            fixed.len()
        )));
    }
    // Orient so that the optimized axis indexes rows of `w`.
    let (w, psi_free, psi_fixed) = match axis {
        Axis::Rows => {
            let mut w = y.clone();
            for (j, mut col) in w.column_iter_mut().enumerate() {
                col *= fixed[j];
            }
            (w, fp.psi_rows(), fp.psi_cols())
        }
        Axis::Cols => {
            let mut w = y.transpose();
            for (i, mut col) in w.column_iter_mut().enumerate() {
                col *= fixed[i];
            }
            (w, fp.psi_cols(), fp.psi_rows())
        }
    };
    let gram = &w * w.transpose();
    let mut out = psi_free.component_mul(&gram);
    let cross = &w * psi_fixed;
    for i in 0..out.nrows() {
        out[(i, i)] += cross.row(i).dot(&w.row(i));
    }
    Ok(symmetrize(&out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpConfig {
    /// Stop when the gradient component tangent to the constraint surface is
    /// below `tol` times `rᵀ|Ω̃|r`, the rounding scale of the objective.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig {
            tol: 1e-10,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub r: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimizes `rᵀΩ̃r` over `r > 0`, `Π r = 1`, starting from all ones.
pub fn solve_product_constrained_qp(
    omega_tilde: &DMatrix<f64>,
    cfg: &QpConfig,
) -> Result<DVector<f64>> {
    let start = DVector::from_element(omega_tilde.nrows(), 1.0);
    Ok(solve_product_constrained_qp_from(omega_tilde, &start, cfg)?.r)
}

/// As [`solve_product_constrained_qp`], warm-started from `start` (rescaled to
/// unit product). The returned objective never exceeds the start's.
///
/// Works in `u = log r` on the hyperplane `Σu = 0` with a modified Newton
/// step and Armijo backtracking. Indices whose row of `Ω̃` is zero do not
/// affect the objective; they are pinned at `r = 1`.
pub fn solve_product_constrained_qp_from(
    omega_tilde: &DMatrix<f64>,
    start: &DVector<f64>,
    cfg: &QpConfig,
) -> Result<QpSolution> {
    let d = omega_tilde.nrows();
    if !omega_tilde.is_square() || start.len() != d || d == 0 {
        return Err(Error::dims(
            "QP matrix must be square and match the start vector",
        ));
    }
    let start = unit_product(start)?;
    let active: Vec<usize> = (0..d)
        .filter(|&i| omega_tilde.row(i).iter().any(|&v| v != 0.0))
        .collect();
    let mut u_full = start.map(f64::ln);
    if active.len() < d {
        for i in 0..d {
            if !active.contains(&i) {
                u_full[i] = 0.0;
            }
        }
        let mean = active.iter().map(|&i| u_full[i]).sum::<f64>() / active.len().max(1) as f64;
        for &i in &active {
            u_full[i] -= mean;
        }
    }
    let n = active.len();
    if n <= 1 {
        let r = DVector::from_element(d, 1.0);
        let objective = (r.transpose() * omega_tilde * &r)[(0, 0)];
        return Ok(QpSolution {
            r,
            objective,
            iterations: 0,
        });
    }
    let a = DMatrix::from_fn(n, n, |p, q| omega_tilde[(active[p], active[q])]);
    let mut u = DVector::from_fn(n, |p, _| u_full[active[p]]);

    let value = |u: &DVector<f64>| -> f64 {
        let r = u.map(f64::exp);
        (r.transpose() * &a * &r)[(0, 0)]
    };
    let a_abs = a.abs();
    let mut f = value(&u);
    let mut iterations = 0;
    loop {
        let r = u.map(f64::exp);
        let ar = &a * &r;
        let mut grad = r.component_mul(&ar) * 2.0;
        let gmean = grad.mean();
        grad.add_scalar_mut(-gmean);
        let scale = (r.transpose() * &a_abs * &r)[(0, 0)].max(f64::MIN_POSITIVE);
        if grad.amax() <= cfg.tol * scale {
            break;
        }
        let step = newton_direction(&a, &r, &ar, &grad);
        let slope = grad.dot(&step);
        // The predicted decrease is below what `f` can resolve.
        if -slope <= 8.0 * f64::EPSILON * scale {
            break;
        }
        if iterations >= cfg.max_iters {
            return Err(Error::NonConvergence {
                solver: "product-constrained QP",
                iterations,
                grad_norm: grad.amax() / scale,
                last_iterate: u.map(f64::exp).iter().copied().collect(),
            });
        }
        iterations += 1;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-20 {
            let trial = &u + &step * alpha;
            let f_new = value(&trial);
            if f_new.is_finite() && f_new <= f + 1e-4 * alpha * slope {
                u = trial;
                f = f_new;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let mean = u.mean();
    u.add_scalar_mut(-mean);
    let mut r = DVector::from_element(d, 1.0);
    for (p, &i) in active.iter().enumerate() {
        r[i] = u[p].exp();
    }
    let objective = (r.transpose() * omega_tilde * &r)[(0, 0)];
    Ok(QpSolution {
        r,
        objective,
        iterations,
    })
}

/// Newton direction on the hyperplane `Σu = 0`, with the projected Hessian's
/// eigenvalues clamped positive where the problem is locally non-convex.
fn newton_direction(
    a: &DMatrix<f64>,
    r: &DVector<f64>,
    ar: &DVector<f64>,
    grad: &DVector<f64>,
) -> DVector<f64> {
    let n = r.len();
    let mut hess = a.component_mul(&(r * r.transpose())) * 2.0;
    for i in 0..n {
        hess[(i, i)] += 2.0 * r[i] * ar[i];
    }
    let centering = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    let projected = symmetrize(&(&centering * hess * &centering));
    let scale = projected
        .diagonal()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let ones_dir = DMatrix::from_element(n, n, scale / n as f64);
    if let Some(ch) = (&projected + &ones_dir).cholesky() {
        let step = -ch.solve(grad);
        let mean = step.mean();
        return step.add_scalar(-mean);
    }
    let (values, vectors) = sorted_eigen(&projected);
    let floor = 1e-8 * values.amax().max(f64::MIN_POSITIVE);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut step = DVector::zeros(n);
    for k in 0..n {
        let v = vectors.column(k);
        // Skip the constraint normal.
        if (v.sum() * inv_sqrt_n).abs() > 1.0 - 1e-8 {
            continue;
        }
        let coeff = v.dot(grad) / values[k].abs().max(floor);
        step -= v * coeff;
    }
    let mean = step.mean();
    step.add_scalar(-mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlipFlopConfig {
    /// Stop when a full sweep lowers the objective by less than this fraction.
    pub tol: f64,
    pub max_sweeps: usize,
    pub qp: QpConfig,
}

impl Default for FlipFlopConfig {
    fn default() -> Self {
        FlipFlopConfig {
            tol: 1e-8,
            max_sweeps: 100,
            qp: QpConfig::default(),
        }
    }
}

/// Alternates row and column scale updates, starting with rows, from `start`
/// (all ones when `None`). The objective is non-increasing at every half-step.
pub fn find_z_star(
    y: &DataMatrix,
    fp: &FactorPrecision,
    start: Option<&NoiseFactors>,
    cfg: &FlipFlopConfig,
) -> Result<FiberPoint> {
    let y = y.entries();
    if y.nrows() != fp.d_rows() || y.ncols() != fp.d_cols() {
        return Err(Error::dims(format!(
            "data is {}x{}, model is {}x{}",
            y.nrows(),
            y.ncols(),
            fp.d_rows(),
            fp.d_cols()
        )));
    }
    let mut factors = match start {
        Some(s) => {
            if s.r_rows.len() != y.nrows() || s.r_cols.len() != y.ncols() {
                return Err(Error::dims("warm-start factors do not match the data"));
            }
            s.clone()
        }
        None => NoiseFactors::ones(y.nrows(), y.ncols()),
    };
    let mut objective = quadratic_value(fp, &factors.apply(y)?)?;
    let mut trace = vec![objective];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let sweep_start = objective;
        for axis in [Axis::Rows, Axis::Cols] {
            let fixed = factors.get(axis.other());
            let omega_tilde = aggregate_quadratic(y, fp, fixed, axis)?;
            let sol = solve_product_constrained_qp_from(&omega_tilde, factors.get(axis), &cfg.qp)?;
            let candidate = match axis {
                Axis::Rows => NoiseFactors {
                    r_rows: sol.r,
                    r_cols: factors.r_cols.clone(),
                },
                Axis::Cols => NoiseFactors {
                    r_rows: factors.r_rows.clone(),
                    r_cols: sol.r,
                },
            };
            let value = quadratic_value(fp, &candidate.apply(y)?)?;
            if value <= objective {
                factors = candidate;
                objective = value;
            }
            trace.push(objective);
        }
        let decrease = sweep_start - objective;
        if decrease <= cfg.tol * sweep_start.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let z_star = factors.apply(y)?;
    Ok(FiberPoint {
        z_star,
        factors,
        objective,
        trace,
        sweeps,
    })
}
