//! Unregularized maximum-likelihood fit of a Kronecker-sum Gaussian from its
//! row and column Gram statistics.
//!
//! The negative log-likelihood (constants dropped) is
//! `½[tr(Ψ_rows S_rows) + tr(Ψ_cols S_cols)] − ½ log det(Ψ_cols ⊕ Ψ_rows)`.
//! Its stationarity conditions `S_rows = PT_rows(Ω)`, `S_cols = PT_cols(Ω)`
//! are met by factors sharing the eigenvectors of the statistics, so the fit
//! runs a damped Newton iteration on the `d_rows + d_cols` eigenvalues in that
//! basis. The objective is convex and the iteration is monotone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kroncore::{require_symmetric, Axis, EigenFactor, FactorPrecision, DEFINITENESS_RTOL};
use crate::linalg::{max_abs, reassemble, sorted_eigen, symmetrize};

const TRACE_RTOL: f64 = 1e-8;

/// Expected row and column Gram matrices of the latent matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    s_rows: DMatrix<f64>,
    s_cols: DMatrix<f64>,
}

impl SufficientStats {
    /// Symmetrizes both matrices and checks `tr(S_rows) = tr(S_cols)` to 1e-8
    /// relative.
    pub fn new(s_rows: DMatrix<f64>, s_cols: DMatrix<f64>) -> Result<Self> {
        require_symmetric("S_rows", &s_rows, 1e-8)?;
        require_symmetric("S_cols", &s_cols, 1e-8)?;
        let tr_rows = s_rows.trace();
        let tr_cols = s_cols.trace();
        let scale = tr_rows.abs().max(tr_cols.abs()).max(f64::MIN_POSITIVE);
        if (tr_rows - tr_cols).abs() > TRACE_RTOL * scale {
            return Err(Error::InvalidParameter(format!(
                "statistic traces differ: {tr_rows} vs {tr_cols}"
            )));
        }
        Ok(SufficientStats {
            s_rows: symmetrize(&s_rows),
            s_cols: symmetrize(&s_cols),
        })
    }

    /// Gram statistics `(Z Zᵀ, Zᵀ Z)` of a single matrix.
    pub fn from_matrix(z: &DMatrix<f64>) -> Self {
        SufficientStats {
            s_rows: symmetrize(&(z * z.transpose())),
            s_cols: symmetrize(&(z.transpose() * z)),
        }
    }

    pub(crate) fn from_trusted(s_rows: DMatrix<f64>, s_cols: DMatrix<f64>) -> Self {
        SufficientStats { s_rows, s_cols }
    }

    pub fn s_rows(&self) -> &DMatrix<f64> {
        &self.s_rows
    }

    pub fn s_cols(&self) -> &DMatrix<f64> {
        &self.s_cols
    }

    pub fn get(&self, axis: Axis) -> &DMatrix<f64> {
        match axis {
            Axis::Rows => &self.s_rows,
            Axis::Cols => &self.s_cols,
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.s_rows).max(max_abs(&self.s_cols))
    }

    fn check_dims(&self, fp: &FactorPrecision) -> Result<()> {
        if self.s_rows.nrows() != fp.d_rows() || self.s_cols.nrows() != fp.d_cols() {
            return Err(Error::dims(format!(
                "statistics are {}+{} but the model is {}x{}",
                self.s_rows.nrows(),
                self.s_cols.nrows(),
                fp.d_rows(),
                fp.d_cols()
            )));
        }
        Ok(())
    }
}

/// `½[tr(Ψ_r S_r) + tr(Ψ_c S_c)] − ½ log det Ω`.
pub fn nll(fp: &FactorPrecision, stats: &SufficientStats) -> Result<f64> {
    stats.check_dims(fp)?;
    let ef = fp.eigen()?;
    let linear = fp.psi_rows().component_mul(&stats.s_rows).sum()
        + fp.psi_cols().component_mul(&stats.s_cols).sum();
    Ok(0.5 * (linear - ef.logdet()))
}

/// `(½(S_r − PT_r), ½(S_c − PT_c))`, where `PT` are the partial traces of
/// `Ω⁻¹`. Both are symmetric and vanish exactly at the MLE.
pub fn grad_nll(
    fp: &FactorPrecision,
    stats: &SufficientStats,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    stats.check_dims(fp)?;
    let ef = fp.eigen()?;
    Ok(grad_from_eigen(&ef, stats))
}

fn grad_from_eigen(ef: &EigenFactor, stats: &SufficientStats) -> (DMatrix<f64>, DMatrix<f64>) {
    let g_rows = (&stats.s_rows - ef.partial_trace_inverse(Axis::Rows)) * 0.5;
    let g_cols = (&stats.s_cols - ef.partial_trace_inverse(Axis::Cols)) * 0.5;
    (g_rows, g_cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmgmConfig {
    /// Stop once the largest gradient entry is below `tol · ‖S‖_∞`.
    pub tol: f64,
    pub max_iters: usize,
    /// Statistic eigenvalues are floored at `eig_floor · λ_max`.
    pub eig_floor: f64,
}

impl Default for GmgmConfig {
    fn default() -> Self {
        GmgmConfig {
            tol: 1e-6,
            max_iters: 2000,
            eig_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmgmSolution {
    /// Trace-normalized fitted factors.
    pub precision: FactorPrecision,
    pub iterations: usize,
    /// `‖grad_nll‖_∞ / ‖S‖_∞` at the returned point, against the input stats.
    pub grad_norm: f64,
    /// Objective after each accepted step (first entry is the start point).
    pub objective_trace: Vec<f64>,
    /// Whether any statistic eigenvalue was raised to the floor.
    pub floor_active: bool,
}

struct EigenProblem {
    s: DVector<f64>,
    t: DVector<f64>,
}

impl EigenProblem {
    fn objective(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let mut logdet = 0.0;
        for &ai in a.iter() {
            for &bj in b.iter() {
                logdet += (ai + bj).ln();
            }
        }
        0.5 * (a.dot(&self.s) + b.dot(&self.t) - logdet)
    }

    /// Gradient (projected off the shift direction) and gauge-fixed Hessian.
    fn derivatives(&self, a: &DVector<f64>, b: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (n, m) = (a.len(), b.len());
        let mut grad = DVector::zeros(n + m);
        let mut hess = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            grad[i] = self.s[i];
        }
        for j in 0..m {
            grad[n + j] = self.t[j];
        }
        for i in 0..n {
            for j in 0..m {
                let inv = 1.0 / (a[i] + b[j]);
                let inv2 = inv * inv;
                grad[i] -= inv;
                grad[n + j] -= inv;
                hess[(i, i)] += inv2;
                hess[(n + j, n + j)] += inv2;
                hess[(i, n + j)] = inv2;
                hess[(n + j, i)] = inv2;
            }
        }
        grad *= 0.5;
        hess *= 0.5;
        // The shift (a + c, b − c) leaves the objective unchanged up to the
        // trace mismatch, which has been balanced away; fix the gauge.
        let mut gauge = DVector::zeros(n + m);
        for i in 0..n {
            gauge[i] = 1.0;
        }
        for j in 0..m {
            gauge[n + j] = -1.0;
        }
        gauge /= ((n + m) as f64).sqrt();
        let along = grad.dot(&gauge);
        grad -= &gauge * along;
        let scale = hess.diagonal().mean();
        hess += &gauge * gauge.transpose() * scale;
        (grad, hess)
    }
}

fn feasible(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let min = a.min() + b.min();
    let max = a.max() + b.max();
    max > 0.0 && min > DEFINITENESS_RTOL * max && min.is_finite() && max.is_finite()
}

/// Raises eigenvalues below `floor` and adds any resulting trace surplus on one
/// side to the other side as a multiple of the identity.
fn floor_and_balance(s: &mut DVector<f64>, t: &mut DVector<f64>, floor: f64) -> bool {
    let mut active = false;
    for v in s.iter_mut().chain(t.iter_mut()) {
        if *v < floor {
            *v = floor;
            active = true;
        }
    }
    let diff = s.sum() - t.sum();
    if diff > 0.0 {
        t.add_scalar_mut(diff / t.len() as f64);
    } else if diff < 0.0 {
        s.add_scalar_mut(-diff / s.len() as f64);
    }
    active
}

/// Fits `(Ψ_rows, Ψ_cols)` to the statistics.
pub fn gmgm_fit(stats: &SufficientStats, cfg: &GmgmConfig) -> Result<GmgmSolution> {
    if !(cfg.tol > 0.0) || cfg.max_iters == 0 {
        return Err(Error::InvalidParameter(
            "gmgm tol must be positive and max_iters >= 1".into(),
        ));
    }
    let (mut s, u_rows) = sorted_eigen(&stats.s_rows);
    let (mut t, u_cols) = sorted_eigen(&stats.s_cols);
    let (n, m) = (s.len(), t.len());
    let top = s.max().max(t.max());
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Degenerate(
            "statistics have no positive eigenvalue".into(),
        ));
    }
    let floor_active = floor_and_balance(&mut s, &mut t, cfg.eig_floor * top);
    let problem = EigenProblem { s, t };
    let stat_scale = stats.max_abs();

    // Isotropic optimum as the start: a_i + b_j = d_r d_c / tr S.
    let c = (n * m) as f64 / problem.s.sum();
    let mut a = DVector::from_element(n, 0.5 * c);
    let mut b = DVector::from_element(m, 0.5 * c);
    let mut f = problem.objective(&a, &b);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut grad_inf;
    loop {
        let (grad, hess) = problem.derivatives(&a, &b);
        grad_inf = grad.amax();
        if grad_inf <= cfg.tol * stat_scale {
            break;
        }
        if iterations >= cfg.max_iters {
            return Err(non_convergence(
                &u_rows,
                &a,
                &u_cols,
                &b,
                iterations,
                grad_inf / stat_scale,
            ));
        }
        iterations += 1;
        let step = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -grad.clone(),
        };
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-20 {
            let a_new = &a + step.rows(0, n) * alpha;
            let b_new = &b + step.rows(n, m) * alpha;
            if feasible(&a_new, &b_new) {
                let f_new = problem.objective(&a_new, &b_new);
                if f_new <= f + 1e-4 * alpha * slope {
                    a = a_new;
                    b = b_new;
                    f = f_new;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Objective is flat to rounding along the Newton direction.
            break;
        }
        trace.push(f);
    }

    let (a, b) = {
        let shift = 0.5 * (b.mean() - a.mean());
        (a.add_scalar(shift), b.add_scalar(-shift))
    };
    let precision = FactorPrecision::from_trusted(reassemble(&u_rows, &a), reassemble(&u_cols, &b));
    let ef = EigenFactor::from_parts(u_rows, a, u_cols, b)?;
    let (g_rows, g_cols) = grad_from_eigen(&ef, stats);
    let grad_norm = max_abs(&g_rows).max(max_abs(&g_cols)) / stat_scale;
    // Allow the floor perturbation on top of the requested tolerance.
    let spread = 2.0 + n as f64 / m as f64 + m as f64 / n as f64;
    let allowed = cfg.tol
        + if floor_active {
            spread * cfg.eig_floor * top / stat_scale
        } else {
            0.0
        };
    if grad_norm > allowed * 1.0001 {
        return Err(Error::NonConvergence {
            solver: "gmgm",
            iterations,
            grad_norm,
            last_iterate: ef
                .values_rows
                .iter()
                .chain(ef.values_cols.iter())
                .copied()
                .collect(),
        });
    }
    Ok(GmgmSolution {
        precision,
        iterations,
        grad_norm,
        objective_trace: trace,
        floor_active,
    })
}

fn non_convergence(
    u_rows: &DMatrix<f64>,
    a: &DVector<f64>,
    u_cols: &DMatrix<f64>,
    b: &DVector<f64>,
    iterations: usize,
    grad_norm: f64,
) -> Error {
    let psi_rows = reassemble(u_rows, a);
    let psi_cols = reassemble(u_cols, b);
    Error::NonConvergence {
        solver: "gmgm",
        iterations,
        grad_norm,
        last_iterate: psi_rows.iter().chain(psi_cols.iter()).copied().collect(),
    }
}
