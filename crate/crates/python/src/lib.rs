//! Python bindings. Matrices cross the boundary as lists of rows (numpy
//! arrays work too, since they are sequences of sequences of floats).

use multiaxis::denoise::{denoise_with, ZeroHandling};
use multiaxis::gmgm::{gmgm_fit, GmgmConfig, SufficientStats};
use multiaxis::graphmetrics::{self, Adjacency};
use multiaxis::synth::{generate_experiment, SynthConfig};
use multiaxis::{DataMatrix, Error, FactorPrecision, FitConfig};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Rows = Vec<Vec<f64>>;
type Edges = Vec<(usize, usize)>;

fn to_py_err(e: Error) -> PyErr {
    match e.root() {
        Error::NonConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn adjacency_edges(a: &Adjacency) -> Edges {
    a.edges().collect()
}

fn parse_zero_handling(s: &str) -> PyResult<ZeroHandling> {
    match s {
        "projection" => Ok(ZeroHandling::Projection),
        "one-shot" => Ok(ZeroHandling::OneShot),
        _ => Err(PyValueError::new_err(format!(
            "zero_handling must be 'projection' or 'one-shot', got {s:?}"
        ))),
    }
}

/// Pair of fitted precision factors.
#[pyclass(module = "pymultiaxis", get_all, frozen, from_py_object)]
#[derive(Clone)]
pub struct Precision {
    pub psi_rows: Rows,
    pub psi_cols: Rows,
}

impl Precision {
    fn from_core(fp: &FactorPrecision) -> Self {
        Precision {
            psi_rows: to_rows(fp.psi_rows()),
            psi_cols: to_rows(fp.psi_cols()),
        }
    }

    fn to_core(&self) -> PyResult<FactorPrecision> {
        FactorPrecision::new(to_matrix(&self.psi_rows)?, to_matrix(&self.psi_cols)?)
            .map_err(to_py_err)
    }
}

#[pymethods]
impl Precision {
    #[new]
    fn new(psi_rows: Rows, psi_cols: Rows) -> PyResult<Self> {
        let p = Precision { psi_rows, psi_cols };
        p.to_core()?;
        Ok(p)
    }

    /// Rescaled so both factors have unit mean diagonal.
    fn trace_normalized(&self) -> PyResult<Self> {
        Ok(Precision::from_core(&self.to_core()?.trace_normalized()))
    }

    /// Entry of the full Kronecker-sum precision between cells
    /// `(row_a, col_a)` and `(row_b, col_b)`.
    fn entry(&self, rows: (usize, usize), cols: (usize, usize)) -> PyResult<f64> {
        self.to_core()?.entry(rows, cols).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Precision(d_rows={}, d_cols={})",
            self.psi_rows.len(),
            self.psi_cols.len()
        )
    }
}

#[pyclass(module = "pymultiaxis", get_all, frozen)]
pub struct FitResult {
    pub precision: Precision,
    pub converged: bool,
    pub iterations: usize,
    /// Largest relative factor change per EM iteration.
    pub changes: Vec<f64>,
    pub noise_rows: Vec<f64>,
    pub noise_cols: Vec<f64>,
}

#[pymethods]
impl FitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(converged={}, iterations={})",
            self.converged, self.iterations
        )
    }
}

/// One synthetic replicate.
#[pyclass(module = "pymultiaxis", get_all, frozen)]
pub struct Replicate {
    pub replicate: usize,
    pub latent: Rows,
    pub observed: Rows,
    pub precision: Precision,
    pub truth_rows: Edges,
    pub truth_cols: Edges,
    pub labels_rows: Vec<usize>,
    pub labels_cols: Vec<usize>,
    pub noise_rows: Vec<f64>,
    pub noise_cols: Vec<f64>,
}

/// Removes row and column scale noise: log, double-center over nonzeros,
/// exponentiate. Zeros stay zero.
#[pyfunction]
#[pyo3(signature = (x, zero_handling = "projection"))]
fn denoise(py: Python<'_>, x: Rows, zero_handling: &str) -> PyResult<Rows> {
    let mode = parse_zero_handling(zero_handling)?;
    let m = DataMatrix::new(to_matrix(&x)?).map_err(to_py_err)?;
    let y = py.detach(|| denoise_with(&m, mode)).map_err(to_py_err)?;
    Ok(to_rows(y.entries()))
}

/// Full noise-robust fit: denoise, then EM over the noise fiber.
#[pyfunction]
#[pyo3(signature = (x, em_tol = 1e-4, em_max_iters = 50, correction = true, seed = 0))]
fn fit(
    py: Python<'_>,
    x: Rows,
    em_tol: f64,
    em_max_iters: usize,
    correction: bool,
    seed: u64,
) -> PyResult<FitResult> {
    let cfg = FitConfig {
        em_tol,
        em_max_iters,
        correction_enabled: correction,
        seed,
        ..FitConfig::default()
    };
    let m = DataMatrix::new(to_matrix(&x)?).map_err(to_py_err)?;
    let report = py
        .detach(|| multiaxis::med_magma_fit(&m, &cfg))
        .map_err(to_py_err)?;
    Ok(FitResult {
        precision: Precision::from_core(&report.fitted.trace_normalized()),
        converged: report.converged,
        iterations: report.iterations,
        changes: report.records.iter().map(|r| r.change()).collect(),
        noise_rows: report.noise.r_rows().iter().copied().collect(),
        noise_cols: report.noise.r_cols().iter().copied().collect(),
    })
}

/// Unregularized Kronecker-sum Gaussian fit on `x` as given, with no noise
/// model.
#[pyfunction]
#[pyo3(signature = (x, tol = 1e-6, max_iters = 2000))]
fn gmgm(py: Python<'_>, x: Rows, tol: f64, max_iters: usize) -> PyResult<Precision> {
    let m = to_matrix(&x)?;
    let cfg = GmgmConfig {
        tol,
        max_iters,
        ..GmgmConfig::default()
    };
    let sol = py
        .detach(|| gmgm_fit(&SufficientStats::from_matrix(&m), &cfg))
        .map_err(to_py_err)?;
    Ok(Precision::from_core(&sol.precision))
}

/// Scale-free graphs on both axes, a Kronecker-sum Gaussian sample, and
/// multiplicative noise of strength `alpha`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (d_rows, d_cols, alpha = 0.0, replicates = 1, seed = 0, ba_m = 2, pd_margin = 0.1))]
fn synth(
    py: Python<'_>,
    d_rows: usize,
    d_cols: usize,
    alpha: f64,
    replicates: usize,
    seed: u64,
    ba_m: usize,
    pd_margin: f64,
) -> PyResult<Vec<Replicate>> {
    let cfg = SynthConfig {
        d_rows,
        d_cols,
        ba_m,
        alpha,
        replicates,
        seed,
        pd_margin,
    };
    let bundles = py.detach(|| generate_experiment(&cfg)).map_err(to_py_err)?;
    Ok(bundles
        .into_iter()
        .map(|b| Replicate {
            replicate: b.replicate,
            latent: to_rows(&b.latent),
            observed: to_rows(&b.observed),
            precision: Precision::from_core(&b.precision),
            truth_rows: adjacency_edges(&b.truth_rows),
            truth_cols: adjacency_edges(&b.truth_cols),
            labels_rows: b.labels_rows,
            labels_cols: b.labels_cols,
            noise_rows: b.noise.r_rows.iter().copied().collect(),
            noise_cols: b.noise.r_cols.iter().copied().collect(),
        })
        .collect())
}

/// Area under the precision-recall curve of off-diagonal `|scores|`
/// against the undirected `truth` edges.
#[pyfunction]
fn aupr(scores: Rows, truth: Edges) -> PyResult<f64> {
    let s = to_matrix(&scores)?;
    let t = Adjacency::from_edges(s.nrows(), truth).map_err(to_py_err)?;
    graphmetrics::pr_curve_aupr(&graphmetrics::edge_scores(&s), &t)
        .map(|(_, a)| a)
        .map_err(to_py_err)
}

/// Keeps each vertex's `k` strongest off-diagonal scores, symmetrized.
#[pyfunction]
fn topk_graph(scores: Rows, k: usize) -> PyResult<Edges> {
    let s = to_matrix(&scores)?;
    graphmetrics::threshold_topk(&graphmetrics::edge_scores(&s), k)
        .map(|a| adjacency_edges(&a))
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (n_nodes, edges, resolution = 1.0, seed = 0))]
fn communities(n_nodes: usize, edges: Edges, resolution: f64, seed: u64) -> PyResult<Vec<usize>> {
    let a = Adjacency::from_edges(n_nodes, edges).map_err(to_py_err)?;
    Ok(graphmetrics::community_detect(&a, resolution, seed))
}

#[pyfunction]
fn assortativity(n_nodes: usize, edges: Edges, labels: Vec<usize>) -> PyResult<f64> {
    let a = Adjacency::from_edges(n_nodes, edges).map_err(to_py_err)?;
    graphmetrics::assortativity(&a, &labels).map_err(to_py_err)
}

/// Adjusted mutual information between two labelings.
#[pyfunction]
fn ami(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    graphmetrics::ami(&a, &b).map_err(to_py_err)
}

#[pymodule]
fn pymultiaxis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Precision>()?;
    m.add_class::<FitResult>()?;
    m.add_class::<Replicate>()?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(gmgm, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(aupr, m)?)?;
    m.add_function(wrap_pyfunction!(topk_graph, m)?)?;
    m.add_function(wrap_pyfunction!(communities, m)?)?;
    m.add_function(wrap_pyfunction!(assortativity, m)?)?;
    m.add_function(wrap_pyfunction!(ami, m)?)?;
    m.add("SCHEMA_VERSION", multiaxis::SCHEMA_VERSION)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = to_matrix(&rows).unwrap();
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(to_rows(&m), rows);
    }

    #[test]
    fn zero_handling_names() {
        assert_eq!(
            parse_zero_handling("one-shot").unwrap(),
            ZeroHandling::OneShot
        );
        assert_eq!(
            parse_zero_handling("projection").unwrap(),
            ZeroHandling::Projection
        );
    }
}
