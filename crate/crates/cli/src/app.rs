//! Argument parsing. Each subcommand resolves its flags, config file and
//! overrides into an [`Invocation`] before anything runs.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use multiaxis::denoise::ZeroHandling;
use multiaxis::ingest::DenseOptions;
use multiaxis::synth::SynthConfig;
use multiaxis::FitConfig;

use crate::bench::BenchConfig;
use crate::commands::{
    cmd_replay, resolve_outdir, BenchArgs, DenoiseArgs, EvalArgs, FitArgs, Invocation, SweepConfig,
    SynthArgs,
};
use crate::config::layered;
use crate::files::Format;
use crate::methods::Method;
use crate::{exit, CliError, CliResult, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "multiaxis",
    version,
    about = "Row and column dependency graphs from one noisy data matrix"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove per-row and per-column multiplicative noise from a matrix.
    Denoise(DenoiseCmd),
    /// Fit row and column precision factors.
    Fit(FitCmd),
    /// Generate synthetic replicates with known graphs.
    Synth(SynthCmd),
    /// Score fitted graphs against truth graphs and labels.
    Eval(EvalCmd),
    /// Run the paired noise-strength benchmark.
    Bench(BenchCmd),
    /// Re-run the invocation recorded in a manifest.
    Replay(ReplayCmd),
}

#[derive(Debug, Args)]
pub struct CsvFlags {
    /// Field delimiter for delimited text.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The first line holds data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// The first field of each line is data, not a row name.
    #[arg(long)]
    pub no_row_names: bool,
    /// Header name of a categorical label column.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Input format; detected from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl CsvFlags {
    fn options(&self) -> CliResult<DenseOptions> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::Input(format!(
                "delimiter {:?} is not a single ASCII byte",
                self.delimiter
            )));
        }
        Ok(DenseOptions {
            delimiter: self.delimiter as u8,
            has_header: !self.no_header,
            has_row_names: !self.no_row_names,
            label_column: self.label_column.clone(),
        })
    }
}

#[derive(Debug, Args)]
pub struct ConfigFlags {
    /// JSON config file; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set gmgm.tol=1e-8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigFlags {
    fn load<T: serde::Serialize + serde::de::DeserializeOwned + Default>(&self) -> CliResult<T> {
        layered(self.config.as_deref(), &self.overrides)
    }
}

fn parse_zero_handling(s: &str) -> Result<ZeroHandling, String> {
    match s {
        "projection" => Ok(ZeroHandling::Projection),
        "one-shot" => Ok(ZeroHandling::OneShot),
        _ => Err(format!("expected `projection` or `one-shot`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct DenoiseCmd {
    /// Data matrix (CSV or MatrixMarket).
    pub input: PathBuf,
    /// Output file, written in the input's format.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// How means are taken over a matrix with zeros.
    #[arg(long, value_parser = parse_zero_handling, default_value = "projection")]
    pub zero_handling: ZeroHandling,
    #[command(flatten)]
    pub csv: CsvFlags,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    /// Data matrix, rows are observations (CSV or MatrixMarket).
    pub input: PathBuf,
    /// Defaults to `$MULTIAXIS_OUTPUT_ROOT/fit`.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Recorded in the manifest; the fit itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop once the relative factor change drops below this [default: 1e-4].
    #[arg(long)]
    pub em_tol: Option<f64>,
    /// EM iteration budget [default: 50]; exhausting it exits with status 4.
    #[arg(long)]
    pub em_max_iters: Option<usize>,
    /// Drop the curvature correction from the EM statistics.
    #[arg(long)]
    pub no_correction: bool,
    #[command(flatten)]
    pub config: ConfigFlags,
    #[command(flatten)]
    pub csv: CsvFlags,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Defaults to `$MULTIAXIS_OUTPUT_ROOT/synth`.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Number of rows [default: 100].
    #[arg(long)]
    pub d_rows: Option<usize>,
    /// Number of columns [default: 150].
    #[arg(long)]
    pub d_cols: Option<usize>,
    /// Edges added per new vertex in the scale-free truth graphs [default: 2].
    #[arg(long)]
    pub ba_m: Option<usize>,
    /// Noise strength in [0, 1] [default: 0].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Directory with `psi_rows.csv` and `psi_cols.csv`, as written by `fit`.
    pub graphdir: PathBuf,
    /// Directory with `truth_*.tsv` and `labels_*.txt`, as written by `synth`.
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    /// Row truth edges (TSV); overrides `--truth-dir`.
    #[arg(long)]
    pub truth_rows: Option<PathBuf>,
    /// Column truth edges (TSV); overrides `--truth-dir`.
    #[arg(long)]
    pub truth_cols: Option<PathBuf>,
    /// One row label per line; overrides `--truth-dir`.
    #[arg(long)]
    pub labels_rows: Option<PathBuf>,
    /// One column label per line; overrides `--truth-dir`.
    #[arg(long)]
    pub labels_cols: Option<PathBuf>,
    /// Report AUPR only; fails if a truth graph is missing.
    #[arg(long)]
    pub aupr_only: bool,
    /// Defaults to `<graphdir>/eval`.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Largest top-k threshold in the AMI sweep [default: 40].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Top-k threshold for the assortativity graph [default: 2].
    #[arg(long)]
    pub assortativity_k: Option<usize>,
    /// Community-detection seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct BenchCmd {
    /// Defaults to `$MULTIAXIS_OUTPUT_ROOT/bench`.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// [default: 30]
    #[arg(long)]
    pub d_rows: Option<usize>,
    /// [default: 40]
    #[arg(long)]
    pub d_cols: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated noise strengths [default: 0,0.5,1].
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated methods [default: all].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave the best-AMI column empty.
    #[arg(long)]
    pub skip_ami: bool,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct ReplayCmd {
    /// A `manifest.json` (or `<output>.manifest.json` for denoise).
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Turns parsed flags into a runnable invocation. `None` means replay.
pub fn resolve(command: Command) -> CliResult<Result<Invocation, ReplayCmd>> {
    Ok(Ok(match command {
        Command::Denoise(c) => {
            let format = c.csv.format;
            let output = match c.output {
                Some(o) => o,
                None => {
                    let ext = c
                        .input
                        .extension()
                        .map_or_else(|| "csv".into(), |e| e.to_string_lossy().into_owned());
                    resolve_outdir(None, "denoise").join(format!("denoised.{ext}"))
                }
            };
            Invocation::Denoise(DenoiseArgs {
                input: c.input,
                output,
                format,
                csv: c.csv.options()?,
                zero_handling: c.zero_handling,
            })
        }
        Command::Fit(c) => {
            let mut fit: FitConfig = c.config.load()?;
            set(&mut fit.seed, c.seed);
            set(&mut fit.em_tol, c.em_tol);
            set(&mut fit.em_max_iters, c.em_max_iters);
            if c.no_correction {
                fit.correction_enabled = false;
            }
            fit.validate()?;
            Invocation::Fit(FitArgs {
                input: c.input,
                format: c.csv.format,
                csv: c.csv.options()?,
                fit,
                outdir: resolve_outdir(c.outdir, "fit"),
            })
        }
        Command::Synth(c) => {
            let mut synth: SynthConfig = c.config.load()?;
            set(&mut synth.d_rows, c.d_rows);
            set(&mut synth.d_cols, c.d_cols);
            set(&mut synth.ba_m, c.ba_m);
            set(&mut synth.alpha, c.alpha);
            set(&mut synth.replicates, c.replicates);
            set(&mut synth.seed, c.seed);
            Invocation::Synth(SynthArgs {
                synth,
                outdir: resolve_outdir(c.outdir, "synth"),
            })
        }
        Command::Eval(c) => {
            let mut sweep: SweepConfig = c.config.load()?;
            set(&mut sweep.k_max, c.k_max);
            set(&mut sweep.assortativity_k, c.assortativity_k);
            set(&mut sweep.seed, c.seed);
            let outdir = c.outdir.unwrap_or_else(|| c.graphdir.join("eval"));
            Invocation::Eval(EvalArgs {
                graphdir: c.graphdir,
                truth_dir: c.truth_dir,
                truth_rows: c.truth_rows,
                truth_cols: c.truth_cols,
                labels_rows: c.labels_rows,
                labels_cols: c.labels_cols,
                aupr_only: c.aupr_only,
                sweep,
                outdir,
            })
        }
        Command::Bench(c) => {
            let mut bench: BenchConfig = c.config.load()?;
            set(&mut bench.d_rows, c.d_rows);
            set(&mut bench.d_cols, c.d_cols);
            set(&mut bench.replicates, c.replicates);
            set(&mut bench.alphas, c.alphas);
            set(&mut bench.methods, c.methods);
            set(&mut bench.seed, c.seed);
            if c.skip_ami {
                bench.skip_ami = true;
            }
            Invocation::Bench(BenchArgs {
                bench,
                outdir: resolve_outdir(c.outdir, "bench"),
            })
        }
        Command::Replay(r) => return Ok(Err(r)),
    }))
}

pub fn execute(command: Command) -> CliResult<Outcome> {
    match resolve(command)? {
        Ok(inv) => inv.run(),
        Err(r) => cmd_replay(&r.manifest, r.outdir.as_deref()),
    }
}

/// Parses `args`, runs the command, prints messages and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::INPUT
            } else {
                exit::OK
            };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            for m in &outcome.messages {
                println!("{m}");
            }
            if let Some(d) = &outcome.outdir {
                println!("outputs in {}", d.display());
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
