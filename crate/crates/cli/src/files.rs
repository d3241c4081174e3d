//! File formats: plain numeric CSV, TSV edge lists, label lists and JSON,
//! all written atomically (temp file then rename).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use multiaxis::graphmetrics::Adjacency;
use multiaxis::ingest::{
    load_dense, load_sparse_matrixmarket, write_matrixmarket, Dataset, DenseOptions,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Mtx,
}

impl Format {
    /// `.mtx` means MatrixMarket; anything else is delimited text.
    pub fn detect(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => Format::Mtx,
            _ => Format::Csv,
        }
    }
}

pub fn read_dataset(
    path: &Path,
    format: Option<Format>,
    opts: &DenseOptions,
) -> CliResult<Dataset> {
    Ok(match format.unwrap_or_else(|| Format::detect(path)) {
        Format::Csv => load_dense(path, opts)?,
        Format::Mtx => load_sparse_matrixmarket(path)?,
    })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Headerless numeric CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let opts = DenseOptions {
        has_header: false,
        has_row_names: false,
        ..Default::default()
    };
    Ok(load_dense(path, &opts)?.matrix.into_entries())
}

/// Writes a dataset in `format`; CSV keeps names and labels.
pub fn write_dataset(
    path: &Path,
    ds: &Dataset,
    format: Format,
    opts: &DenseOptions,
) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    match format {
        Format::Csv => multiaxis::ingest::write_dense(ds, &tmp, opts)?,
        Format::Mtx => write_matrixmarket(ds.matrix.entries(), &tmp)?,
    }
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

/// `i\tj\tweight` for every ordered pair `i ≠ j` with a nonzero entry, so
/// the list is symmetric.
pub fn write_edges_tsv(path: &Path, psi: &DMatrix<f64>) -> CliResult<()> {
    let mut out = String::from("i\tj\tweight\n");
    for i in 0..psi.nrows() {
        for j in 0..psi.ncols() {
            let w = psi[(i, j)].abs().max(psi[(j, i)].abs());
            if i != j && w != 0.0 {
                let _ = writeln!(out, "{i}\t{j}\t{w}");
            }
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_adjacency_tsv(path: &Path, adj: &Adjacency) -> CliResult<()> {
    write_edges_tsv(path, &adj.to_matrix())
}

/// Reads an edge list (header optional) into an `n`-vertex graph.
pub fn read_edges_tsv(path: &Path, n: usize) -> CliResult<Adjacency> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if line.trim().is_empty() || (k == 0 && fields[0] == "i") {
            continue;
        }
        let bad = || {
            CliError::Input(format!(
                "{}: line {} is not `i<TAB>j<TAB>weight`",
                path.display(),
                k + 1
            ))
        };
        if fields.len() < 2 {
            return Err(bad());
        }
        let i: usize = fields[0].trim().parse().map_err(|_| bad())?;
        let j: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let w: f64 = fields
            .get(2)
            .map_or(Ok(1.0), |w| w.trim().parse())
            .map_err(|_| bad())?;
        if i != j && w != 0.0 {
            edges.push((i, j));
        }
    }
    Ok(Adjacency::from_edges(n, edges)?)
}

/// One label per line, no header.
pub fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    write_atomic(path, out.as_bytes())
}

/// One label per line; arbitrary strings are mapped to codes in order of
/// first appearance.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut codes = std::collections::BTreeMap::new();
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let next = codes.len();
            *codes.entry(l.to_owned()).or_insert(next)
        })
        .collect())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}
