//! The five subcommands plus manifest replay. Every command takes a fully
//! resolved argument struct, so the struct itself is the config snapshot
//! stored in the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use multiaxis::denoise::{centering_residuals, denoise_with, ZeroHandling};
use multiaxis::graphmetrics::{
    assortativity, best_ami_sweep, edge_scores, linspace, pr_curve_aupr, threshold_topk, PrPoint,
    SweepResult,
};
use multiaxis::ingest::{Dataset, DenseOptions, ProvenanceStep};
use multiaxis::synth::{generate_experiment, SynthConfig};
use multiaxis::{med_magma_fit, FitConfig, FitReport, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::bench::{
    run_bench, summarize, write_bench_csv, write_failures_csv, BenchConfig, ResolutionGrid,
    SummaryRow,
};
use crate::files::{
    read_dataset, read_edges_tsv, read_labels, read_matrix_csv, write_adjacency_tsv, write_dataset,
    write_edges_tsv, write_json, write_labels, write_matrix_csv, Format,
};
use crate::manifest::{InputHash, RunManifest};
use crate::{exit, CliError, CliResult, Outcome};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MULTIAXIS_OUTPUT_ROOT";

/// `explicit`, else `$MULTIAXIS_OUTPUT_ROOT/<command>`, else
/// `multiaxis-output/<command>`.
pub fn resolve_outdir(explicit: Option<PathBuf>, command: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .filter(|v| !v.is_empty())
            .map_or_else(|| PathBuf::from("multiaxis-output"), PathBuf::from);
        root.join(command)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Detected from the extension when unset.
    pub format: Option<Format>,
    pub csv: DenseOptions,
    pub zero_handling: ZeroHandling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArgs {
    pub input: PathBuf,
    pub format: Option<Format>,
    pub csv: DenseOptions,
    pub fit: FitConfig,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    pub synth: SynthConfig,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Neighbours per vertex of the graph used for assortativity.
    pub assortativity_k: usize,
    /// The best-AMI sweep covers `k = 1..=k_max`, capped at `d − 1`.
    pub k_max: usize,
    pub resolutions: ResolutionGrid,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            assortativity_k: 2,
            k_max: 40,
            resolutions: ResolutionGrid::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Directory holding `psi_rows.csv` and `psi_cols.csv`.
    pub graphdir: PathBuf,
    /// Directory searched for `truth_{rows,cols}.tsv` and
    /// `labels_{rows,cols}.txt` when the explicit paths are unset.
    pub truth_dir: Option<PathBuf>,
    pub truth_rows: Option<PathBuf>,
    pub truth_cols: Option<PathBuf>,
    pub labels_rows: Option<PathBuf>,
    pub labels_cols: Option<PathBuf>,
    /// Only AUPR is requested; missing truth is then an input error.
    pub aupr_only: bool,
    pub sweep: SweepConfig,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchArgs {
    pub bench: BenchConfig,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Denoise(DenoiseArgs),
    Fit(FitArgs),
    Synth(SynthArgs),
    Eval(EvalArgs),
    Bench(BenchArgs),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Denoise(_) => "denoise",
            Invocation::Fit(_) => "fit",
            Invocation::Synth(_) => "synth",
            Invocation::Eval(_) => "eval",
            Invocation::Bench(_) => "bench",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Invocation::Denoise(_) => 0,
            Invocation::Fit(a) => a.fit.seed,
            Invocation::Synth(a) => a.synth.seed,
            Invocation::Eval(a) => a.sweep.seed,
            Invocation::Bench(a) => a.bench.seed,
        }
    }

    /// Redirects every output into `dir`; denoise keeps its file name.
    pub fn with_outdir(mut self, dir: &Path) -> Self {
        match &mut self {
            Invocation::Denoise(a) => {
                let name = a
                    .output
                    .file_name()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| "denoised.csv".into());
                a.output = dir.join(name);
            }
            Invocation::Fit(a) => a.outdir = dir.to_path_buf(),
            Invocation::Synth(a) => a.outdir = dir.to_path_buf(),
            Invocation::Eval(a) => a.outdir = dir.to_path_buf(),
            Invocation::Bench(a) => a.outdir = dir.to_path_buf(),
        }
        self
    }

    pub fn run(&self) -> CliResult<Outcome> {
        match self {
            Invocation::Denoise(a) => cmd_denoise(a),
            Invocation::Fit(a) => cmd_fit(a),
            Invocation::Synth(a) => cmd_synth(a),
            Invocation::Eval(a) => cmd_eval(a),
            Invocation::Bench(a) => cmd_bench(a),
        }
    }
}

struct Timer {
    start: Instant,
    laps: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Timer {
            start: Instant::now(),
            laps: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let total: f64 = self.laps.values().sum();
        self.laps
            .insert(name.to_owned(), self.start.elapsed().as_secs_f64() - total);
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.laps
            .insert("total".into(), self.start.elapsed().as_secs_f64());
        self.laps
    }
}

fn manifest_path_for_file(output: &Path) -> PathBuf {
    let mut p = output.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

pub fn cmd_denoise(args: &DenoiseArgs) -> CliResult<Outcome> {
    let mut timer = Timer::new();
    let inputs = vec![InputHash::of(&args.input)?];
    let format = args.format.unwrap_or_else(|| Format::detect(&args.input));
    let ds = read_dataset(&args.input, Some(format), &args.csv)?;
    timer.lap("load");
    let y = denoise_with(&ds.matrix, args.zero_handling)?;
    timer.lap("denoise");
    let (res_rows, res_cols) = centering_residuals(&y);
    let messages = vec![
        format!("nnz {} of {}", y.nnz_total(), y.d_rows() * y.d_cols()),
        format!("centering residuals: rows {res_rows:.3e}, cols {res_cols:.3e}"),
    ];
    let mut out = Dataset { matrix: y, ..ds };
    out.provenance.steps.push(ProvenanceStep {
        step: "denoise".into(),
        params: BTreeMap::from([("zero_handling".into(), format!("{:?}", args.zero_handling))]),
    });
    write_dataset(&args.output, &out, format, &args.csv)?;
    let invocation = Invocation::Denoise(args.clone());
    RunManifest::new(invocation, inputs, timer.finish())
        .write(&manifest_path_for_file(&args.output))?;
    Ok(Outcome {
        exit_code: exit::OK,
        outdir: args.output.parent().map(Path::to_path_buf),
        messages,
    })
}

/// The `report.json` written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub d_rows: usize,
    pub d_cols: usize,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub report: FitReport,
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<Outcome> {
    let mut timer = Timer::new();
    let inputs = vec![InputHash::of(&args.input)?];
    let ds = read_dataset(&args.input, args.format, &args.csv)?;
    timer.lap("load");
    let report = med_magma_fit(&ds.matrix, &args.fit)?;
    timer.lap("fit");
    let fitted = report.fitted.trace_normalized();
    let dir = &args.outdir;
    write_matrix_csv(&dir.join("psi_rows.csv"), fitted.psi_rows())?;
    write_matrix_csv(&dir.join("psi_cols.csv"), fitted.psi_cols())?;
    write_edges_tsv(&dir.join("edges_rows.tsv"), fitted.psi_rows())?;
    write_edges_tsv(&dir.join("edges_cols.tsv"), fitted.psi_cols())?;
    let doc = FitDocument {
        schema_version: SCHEMA_VERSION,
        d_rows: ds.matrix.d_rows(),
        d_cols: ds.matrix.d_cols(),
        row_names: ds.row_names.clone(),
        col_names: ds.col_names.clone(),
        converged: report.converged,
        iterations: report.iterations,
        report,
    };
    write_json(&dir.join("report.json"), &doc)?;
    timer.lap("write");
    RunManifest::new(Invocation::Fit(args.clone()), inputs, timer.finish())
        .write(&dir.join("manifest.json"))?;
    let mut outcome = Outcome::ok(Some(dir.clone()));
    outcome.messages.push(format!(
        "{} EM iterations, converged: {}",
        doc.iterations, doc.converged
    ));
    if !doc.converged {
        outcome.exit_code = exit::NON_CONVERGENCE;
        outcome
            .messages
            .push("EM did not converge; artifacts written with converged = false".into());
    }
    Ok(outcome)
}

pub fn replicate_dir(outdir: &Path, replicate: usize) -> PathBuf {
    outdir.join(format!("replicate_{replicate:03}"))
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<Outcome> {
    let mut timer = Timer::new();
    let bundles = generate_experiment(&args.synth)?;
    timer.lap("generate");
    let csv = DenseOptions::default();
    for b in &bundles {
        let dir = replicate_dir(&args.outdir, b.replicate);
        let as_dataset = |m: &nalgebra::DMatrix<f64>| -> CliResult<Dataset> {
            Ok(Dataset::from_matrix(multiaxis::DataMatrix::new(m.clone())?))
        };
        write_dataset(
            &dir.join("latent.csv"),
            &as_dataset(&b.latent)?,
            Format::Csv,
            &csv,
        )?;
        write_dataset(
            &dir.join("observed.csv"),
            &as_dataset(&b.observed)?,
            Format::Csv,
            &csv,
        )?;
        write_adjacency_tsv(&dir.join("truth_rows.tsv"), &b.truth_rows)?;
        write_adjacency_tsv(&dir.join("truth_cols.tsv"), &b.truth_cols)?;
        write_labels(&dir.join("labels_rows.txt"), &b.labels_rows)?;
        write_labels(&dir.join("labels_cols.txt"), &b.labels_cols)?;
        write_matrix_csv(&dir.join("psi_rows_true.csv"), b.precision.psi_rows())?;
        write_matrix_csv(&dir.join("psi_cols_true.csv"), b.precision.psi_cols())?;
        write_json(&dir.join("noise.json"), &b.noise)?;
    }
    timer.lap("write");
    RunManifest::new(Invocation::Synth(args.clone()), Vec::new(), timer.finish())
        .write(&args.outdir.join("manifest.json"))?;
    let mut outcome = Outcome::ok(Some(args.outdir.clone()));
    outcome
        .messages
        .push(format!("wrote {} replicates", bundles.len()));
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMetrics {
    pub n_nodes: usize,
    pub aupr: Option<f64>,
    pub pr_curve: Option<Vec<PrPoint>>,
    /// On the graph keeping each vertex's `assortativity_k` strongest edges.
    pub assortativity: Option<f64>,
    pub sweep: Option<SweepResult>,
}

/// The `metrics.json` written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    pub schema_version: u32,
    pub rows: AxisMetrics,
    pub cols: AxisMetrics,
}

fn pick(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| dir.as_ref().map(|d| d.join(name)).filter(|p| p.is_file()))
}

fn eval_axis(
    args: &EvalArgs,
    axis: &str,
    truth: Option<&Path>,
    labels: Option<&Path>,
    inputs: &mut Vec<InputHash>,
) -> CliResult<AxisMetrics> {
    let psi_path = args.graphdir.join(format!("psi_{axis}.csv"));
    inputs.push(InputHash::of(&psi_path)?);
    let psi = read_matrix_csv(&psi_path)?;
    if psi.nrows() != psi.ncols() || psi.nrows() < 2 {
        return Err(CliError::Input(format!(
            "{}: expected a square matrix of side ≥ 2",
            psi_path.display()
        )));
    }
    let n = psi.nrows();
    let scores = edge_scores(&psi);
    let mut m = AxisMetrics {
        n_nodes: n,
        aupr: None,
        pr_curve: None,
        assortativity: None,
        sweep: None,
    };
    if let Some(t) = truth {
        inputs.push(InputHash::of(t)?);
        let (curve, aupr) = pr_curve_aupr(&scores, &read_edges_tsv(t, n)?)?;
        m.aupr = Some(aupr);
        m.pr_curve = Some(curve);
    }
    if let (Some(l), false) = (labels, args.aupr_only) {
        inputs.push(InputHash::of(l)?);
        let labels = read_labels(l)?;
        if labels.len() != n {
            return Err(CliError::Input(format!(
                "{}: {} labels for {n} vertices",
                l.display(),
                labels.len()
            )));
        }
        let k = args.sweep.assortativity_k.clamp(1, n - 1);
        m.assortativity = Some(assortativity(&threshold_topk(&scores, k)?, &labels)?);
        let ks: Vec<usize> = (1..=args.sweep.k_max.min(n - 1)).collect();
        let g = &args.sweep.resolutions;
        m.sweep = Some(best_ami_sweep(
            &scores,
            &labels,
            &ks,
            &linspace(g.lo, g.hi, g.count),
            args.sweep.seed,
        )?);
    }
    Ok(m)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<Outcome> {
    let mut timer = Timer::new();
    let truth_rows = pick(&args.truth_rows, &args.truth_dir, "truth_rows.tsv");
    let truth_cols = pick(&args.truth_cols, &args.truth_dir, "truth_cols.tsv");
    let labels_rows = pick(&args.labels_rows, &args.truth_dir, "labels_rows.txt");
    let labels_cols = pick(&args.labels_cols, &args.truth_dir, "labels_cols.txt");
    if args.aupr_only && (truth_rows.is_none() || truth_cols.is_none()) {
        return Err(CliError::Input(
            "AUPR requested but no truth graph was given for both axes".into(),
        ));
    }
    if truth_rows.is_none()
        && truth_cols.is_none()
        && labels_rows.is_none()
        && labels_cols.is_none()
    {
        return Err(CliError::Input(
            "nothing to evaluate: give truth graphs and/or labels".into(),
        ));
    }
    let mut inputs = Vec::new();
    let rows = eval_axis(
        args,
        "rows",
        truth_rows.as_deref(),
        labels_rows.as_deref(),
        &mut inputs,
    )?;
    let cols = eval_axis(
        args,
        "cols",
        truth_cols.as_deref(),
        labels_cols.as_deref(),
        &mut inputs,
    )?;
    timer.lap("evaluate");
    let doc = EvalDocument {
        schema_version: SCHEMA_VERSION,
        rows,
        cols,
    };
    write_json(&args.outdir.join("metrics.json"), &doc)?;
    RunManifest::new(Invocation::Eval(args.clone()), inputs, timer.finish())
        .write(&args.outdir.join("manifest.json"))?;
    let mut outcome = Outcome::ok(Some(args.outdir.clone()));
    for (name, m) in [("rows", &doc.rows), ("cols", &doc.cols)] {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        outcome.messages.push(format!(
            "{name}: aupr {} assortativity {} best_ami {}",
            fmt(m.aupr),
            fmt(m.assortativity),
            fmt(m.sweep.as_ref().map(|s| s.best_ami))
        ));
    }
    Ok(outcome)
}

/// The `summary.json` written by `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDocument {
    pub schema_version: u32,
    pub cells: usize,
    pub failed: usize,
    pub summary: Vec<SummaryRow>,
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Outcome> {
    let mut timer = Timer::new();
    let result = run_bench(&args.bench)?;
    timer.lap("run");
    let dir = &args.outdir;
    write_bench_csv(&dir.join("bench.csv"), &result.rows)?;
    write_failures_csv(&dir.join("failures.csv"), &result.failures)?;
    let doc = BenchDocument {
        schema_version: SCHEMA_VERSION,
        cells: result.rows.len() + result.failures.len(),
        failed: result.failures.len(),
        summary: summarize(&result.rows),
    };
    write_json(&dir.join("summary.json"), &doc)?;
    RunManifest::new(Invocation::Bench(args.clone()), Vec::new(), timer.finish())
        .write(&dir.join("manifest.json"))?;
    let mut outcome = Outcome::ok(Some(dir.clone()));
    for s in &doc.summary {
        outcome.messages.push(format!(
            "{:<22} alpha {:<5} median AUPR {:.4} ({} cells)",
            s.method.name(),
            s.alpha,
            s.median_aupr,
            s.completed
        ));
    }
    if doc.failed > 0 {
        outcome.messages.push(format!(
            "{} of {} cells failed; see failures.csv",
            doc.failed, doc.cells
        ));
    }
    if result.rows.is_empty() {
        outcome.exit_code = exit::BENCH_FAILED;
    }
    Ok(outcome)
}

/// Re-runs a manifest, optionally redirecting its outputs.
pub fn cmd_replay(manifest: &Path, outdir: Option<&Path>) -> CliResult<Outcome> {
    let m = RunManifest::read(manifest)?;
    m.verify_inputs()?;
    let inv = match outdir {
        Some(d) => m.invocation.with_outdir(d),
        None => m.invocation,
    };
    inv.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invocation_round_trips_with_tag() {
        let inv = Invocation::Synth(SynthArgs {
            synth: SynthConfig::default(),
            outdir: "out".into(),
        });
        let text = serde_json::to_string(&inv).unwrap();
        assert!(text.contains("\"command\":\"synth\""));
        let back: Invocation = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inv);
    }

    #[test]
    fn outdir_redirect_keeps_denoise_file_name() {
        let inv = Invocation::Denoise(DenoiseArgs {
            input: "a.csv".into(),
            output: "x/y.csv".into(),
            format: None,
            csv: DenseOptions::default(),
            zero_handling: ZeroHandling::Projection,
        });
        match inv.with_outdir(Path::new("z")) {
            Invocation::Denoise(a) => assert_eq!(a.output, PathBuf::from("z/y.csv")),
            _ => unreachable!(),
        }
    }

    #[test]
    fn explicit_outdir_wins() {
        assert_eq!(resolve_outdir(Some("q".into()), "fit"), PathBuf::from("q"));
    }
}
