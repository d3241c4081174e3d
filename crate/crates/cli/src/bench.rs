//! Paired noise-strength benchmark: every method sees the same truth graphs
//! and latent sample at every noise strength of a replicate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use multiaxis::graphmetrics::{
    assortativity, best_ami_sweep, edge_scores, linspace, pr_curve_aupr, threshold_topk,
};
use multiaxis::seeds::derive_seed;
use multiaxis::synth::{ReplicateBase, SynthConfig};
use multiaxis::FitConfig;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::files::write_atomic;
use crate::methods::{estimate, Method};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for ResolutionGrid {
    fn default() -> Self {
        ResolutionGrid {
            lo: 0.02,
            hi: 2.0,
            count: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub d_rows: usize,
    pub d_cols: usize,
    pub ba_m: usize,
    pub pd_margin: f64,
    pub seed: u64,
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    /// Neighbours per vertex for the assortativity graph; `ba_m` when unset.
    pub assortativity_k: Option<usize>,
    /// Largest `k` in the best-AMI sweep (`1..=k_max`, capped at `d − 1`).
    pub k_max: usize,
    pub resolutions: ResolutionGrid,
    /// Skip the best-AMI sweep (the column is then empty).
    pub skip_ami: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            d_rows: 30,
            d_cols: 40,
            ba_m: 2,
            pd_margin: 0.1,
            seed: 0,
            replicates: 10,
            alphas: vec![0.0, 0.5, 1.0],
            methods: Method::ALL.to_vec(),
            fit: FitConfig::default(),
            assortativity_k: None,
            k_max: 40,
            resolutions: ResolutionGrid::default(),
            skip_ami: false,
        }
    }
}

impl BenchConfig {
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            d_rows: self.d_rows,
            d_cols: self.d_cols,
            ba_m: self.ba_m,
            alpha: 0.0,
            replicates: self.replicates,
            seed: self.seed,
            pd_margin: self.pd_margin,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.synth_config().validate()?;
        self.fit.validate()?;
        if self.alphas.is_empty() || self.methods.is_empty() || self.replicates == 0 {
            return Err(CliError::Input(
                "alphas, methods and replicates must be non-empty".into(),
            ));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(CliError::Input(format!("alpha {a} outside [0, 1]")));
            }
        }
        if self.k_max == 0 || self.resolutions.count == 0 {
            return Err(CliError::Input("sweep ranges must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub alpha: f64,
    pub replicate: usize,
    pub aupr_rows: f64,
    pub aupr_cols: f64,
    /// Mean over both axes.
    pub assortativity: f64,
    /// Mean over both axes; NaN when the sweep is skipped.
    pub best_ami: f64,
}

impl BenchRow {
    pub fn aupr(&self) -> f64 {
        0.5 * (self.aupr_rows + self.aupr_cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub method: Method,
    pub alpha: f64,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
}

struct AxisEval {
    aupr: f64,
    assortativity: f64,
    best_ami: f64,
}

fn evaluate_axis(
    cfg: &BenchConfig,
    psi: &DMatrix<f64>,
    truth: &multiaxis::Adjacency,
    labels: &[usize],
    seed: u64,
) -> CliResult<AxisEval> {
    let scores = edge_scores(psi);
    let (_, aupr) = pr_curve_aupr(&scores, truth)?;
    let n = psi.nrows();
    let k = cfg.assortativity_k.unwrap_or(cfg.ba_m).clamp(1, n - 1);
    let assort = assortativity(&threshold_topk(&scores, k)?, labels).unwrap_or(f64::NAN);
    let best_ami = if cfg.skip_ami {
        f64::NAN
    } else {
        let ks: Vec<usize> = (1..=cfg.k_max.min(n - 1)).collect();
        let res = linspace(
            cfg.resolutions.lo,
            cfg.resolutions.hi,
            cfg.resolutions.count,
        );
        best_ami_sweep(&scores, labels, &ks, &res, seed)?.best_ami
    };
    Ok(AxisEval {
        aupr,
        assortativity: assort,
        best_ami,
    })
}

fn run_cell(
    cfg: &BenchConfig,
    base: &ReplicateBase,
    method: Method,
    alpha: f64,
) -> CliResult<BenchRow> {
    let bundle = base.with_alpha(alpha)?;
    let est = estimate(method, &bundle.observed, &cfg.fit)?;
    let seed = derive_seed(cfg.seed, &[7, base.replicate as u64]);
    let rows = evaluate_axis(
        cfg,
        &est.psi_rows,
        &bundle.truth_rows,
        &bundle.labels_rows,
        seed,
    )?;
    let cols = evaluate_axis(
        cfg,
        &est.psi_cols,
        &bundle.truth_cols,
        &bundle.labels_cols,
        seed,
    )?;
    Ok(BenchRow {
        method,
        alpha,
        replicate: base.replicate,
        aupr_rows: rows.aupr,
        aupr_cols: cols.aupr,
        assortativity: 0.5 * (rows.assortativity + cols.assortativity),
        best_ami: 0.5 * (rows.best_ami + cols.best_ami),
    })
}

/// Runs every `(method, alpha, replicate)` cell in parallel. Rows come back
/// ordered by method, then alpha, then replicate; failed cells are collected
/// separately and never abort the run.
pub fn run_bench(cfg: &BenchConfig) -> CliResult<BenchResult> {
    cfg.validate()?;
    let synth = cfg.synth_config();
    let bases: Vec<CliResult<ReplicateBase>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| Ok(ReplicateBase::generate(&synth, r)?))
        .collect();
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &alpha in &cfg.alphas {
            for r in 0..cfg.replicates {
                cells.push((method, alpha, r));
            }
        }
    }
    let outcomes: Vec<Result<BenchRow, BenchFailure>> = cells
        .par_iter()
        .map(|&(method, alpha, replicate)| {
            let fail = |e: &CliError| BenchFailure {
                method,
                alpha,
                replicate,
                error: e.to_string(),
            };
            let base = bases[replicate].as_ref().map_err(&fail)?;
            run_cell(cfg, base, method, alpha).map_err(|e| fail(&e))
        })
        .collect();
    let mut result = BenchResult::default();
    for o in outcomes {
        match o {
            Ok(row) => result.rows.push(row),
            Err(f) => result.failures.push(f),
        }
    }
    Ok(result)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> CliResult<()> {
    let mut out =
        String::from("method,alpha,replicate,aupr_rows,aupr_cols,assortativity,best_ami\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method.name(),
            r.alpha,
            r.replicate,
            fmt_value(r.aupr_rows),
            fmt_value(r.aupr_cols),
            fmt_value(r.assortativity),
            fmt_value(r.best_ami)
        );
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_failures_csv(path: &Path, failures: &[BenchFailure]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "alpha", "replicate", "error"])
        .map_err(|e| CliError::Input(e.to_string()))?;
    for f in failures {
        w.write_record([
            f.method.name(),
            &f.alpha.to_string(),
            &f.replicate.to_string(),
            &f.error,
        ])
        .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub alpha: f64,
    /// Median over replicates of the mean of row and column AUPR.
    pub median_aupr: f64,
    pub completed: usize,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, u64), (Method, f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let order = Method::ALL.iter().position(|&m| m == r.method).unwrap_or(0);
        groups
            .entry((order, r.alpha.to_bits()))
            .or_insert_with(|| (r.method, r.alpha, Vec::new()))
            .2
            .push(r.aupr());
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|(method, alpha, v)| SummaryRow {
            method,
            alpha,
            completed: v.len(),
            median_aupr: median(v),
        })
        .collect();
    out.sort_by(|a, b| {
        let oa = Method::ALL.iter().position(|&m| m == a.method);
        let ob = Method::ALL.iter().position(|&m| m == b.method);
        oa.cmp(&ob).then(a.alpha.total_cmp(&b.alpha))
    });
    out
}

pub fn median_aupr(summary: &[SummaryRow], method: Method, alpha: f64) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.method == method && s.alpha == alpha)
        .map(|s| s.median_aupr)
}
