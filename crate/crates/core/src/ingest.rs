//! Loading expression matrices and the gene-selection preprocessing steps.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::denoise::{is_zero, DataMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProvenanceStep {
    pub step: String,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub steps: Vec<ProvenanceStep>,
}

impl Provenance {
    fn record(&mut self, step: &str, params: &[(&str, String)]) {
        self.steps.push(ProvenanceStep {
            step: step.into(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        });
    }
}

/// Rows are observations (cells), columns are features (genes).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub row_labels: Option<Vec<String>>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub provenance: Provenance,
}

fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn require_unique(kind: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidParameter(format!(
                "duplicate {kind} name {n:?}"
            )));
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        matrix: DataMatrix,
        row_labels: Option<Vec<String>>,
        row_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        if row_names.len() != matrix.d_rows() || col_names.len() != matrix.d_cols() {
            return Err(Error::dims("one name per row and per column required"));
        }
        if row_labels
            .as_ref()
            .is_some_and(|l| l.len() != matrix.d_rows())
        {
            return Err(Error::dims("one label per row required"));
        }
        require_unique("row", &row_names)?;
        require_unique("column", &col_names)?;
        Ok(Dataset {
            matrix,
            row_labels,
            row_names,
            col_names,
            provenance: Provenance::default(),
        })
    }

    /// Unnamed dataset with generated identifiers.
    pub fn from_matrix(matrix: DataMatrix) -> Self {
        let row_names = default_names("r", matrix.d_rows());
        let col_names = default_names("c", matrix.d_cols());
        Dataset {
            matrix,
            row_labels: None,
            row_names,
            col_names,
            provenance: Provenance::default(),
        }
    }

    /// Labels as integer codes in order of first appearance.
    pub fn label_codes(&self) -> Option<Vec<usize>> {
        self.row_labels.as_ref().map(|labels| {
            let mut codes = BTreeMap::new();
            labels
                .iter()
                .map(|l| {
                    let next = codes.len();
                    *codes.entry(l.as_str()).or_insert(next)
                })
                .collect()
        })
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if cols.is_empty() {
            return Err(Error::Preprocessing("no columns selected".into()));
        }
        let m = self.matrix.entries().select_columns(cols.iter());
        Ok(Dataset {
            matrix: DataMatrix::new(m)?,
            row_labels: self.row_labels.clone(),
            row_names: self.row_names.clone(),
            col_names: cols.iter().map(|&j| self.col_names[j].clone()).collect(),
            provenance: self.provenance.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenseOptions {
    pub delimiter: u8,
    /// First line holds column names.
    pub has_header: bool,
    /// First field of each line holds the row name.
    pub has_row_names: bool,
    /// Header name of a categorical column moved into `row_labels`.
    pub label_column: Option<String>,
}

impl Default for DenseOptions {
    fn default() -> Self {
        DenseOptions {
            delimiter: b',',
            has_header: true,
            has_row_names: true,
            label_column: None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.to_string())
}

pub fn load_dense(path: impl AsRef<Path>, opts: &DenseOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();
    let offset = usize::from(opts.has_row_names);

    let header: Option<Vec<String>> = if opts.has_header {
        let rec = records
            .next()
            .ok_or_else(|| Error::parse(path, "missing header line"))?
            .map_err(|e| csv_err(path, e))?;
        Some(rec.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let label_idx = match (&opts.label_column, &header) {
        (None, _) => None,
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .filter(|&p| p >= offset)
                .ok_or_else(|| {
                    Error::parse(path, format!("label column {name:?} not in header"))
                })?,
        ),
        (Some(_), None) => return Err(Error::parse(path, "a label column needs a header line")),
    };

    let mut row_names = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::parse(
                path,
                format!("record {} has {} fields, expected {w}", line + 1, rec.len()),
            ));
        }
        for (k, field) in rec.iter().enumerate() {
            if k < offset {
                row_names.push(field.to_owned());
            } else if Some(k) == label_idx {
                labels.push(field.to_owned());
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::parse(
                        path,
                        format!("record {}: cannot parse {field:?} as a number", line + 1),
                    )
                })?;
                values.push(v);
            }
        }
    }
    let width = width.ok_or_else(|| Error::parse(path, "no data"))?;
    let n_cols = width - offset - usize::from(label_idx.is_some());
    let n_rows = values.len().checked_div(n_cols).unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::parse(path, "no numeric data"));
    }
    let col_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|&(k, _)| k >= offset && Some(k) != label_idx)
            .map(|(_, s)| s.clone())
            .collect(),
        None => default_names("c", n_cols),
    };
    if !opts.has_row_names {
        row_names = default_names("r", n_rows);
    }
    let matrix = DataMatrix::new(DMatrix::from_row_slice(n_rows, n_cols, &values))
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut ds = Dataset::new(matrix, label_idx.map(|_| labels), row_names, col_names)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

/// Writes a dataset so that [`load_dense`] with the same options restores it.
/// Labels are written as the last column, named by `opts.label_column` or `label`.
pub fn write_dense(ds: &Dataset, path: impl AsRef<Path>, opts: &DenseOptions) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(opts.delimiter)
        .from_writer(BufWriter::new(file));
    let label_name = opts.label_column.clone().unwrap_or_else(|| "label".into());
    let has_labels = ds.row_labels.is_some();
    if opts.has_header {
        let mut h: Vec<String> = Vec::new();
        if opts.has_row_names {
            h.push(String::new());
        }
        h.extend(ds.col_names.iter().cloned());
        if has_labels {
            h.push(label_name);
        }
        w.write_record(&h).map_err(|e| csv_err(path, e))?;
    } else if has_labels {
        return Err(Error::InvalidParameter(
            "labels can only be written with a header line".into(),
        ));
    }
    let m = ds.matrix.entries();
    for i in 0..m.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(m.ncols() + 2);
        if opts.has_row_names {
            rec.push(ds.row_names[i].clone());
        }
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        if let Some(l) = &ds.row_labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Coordinate-format `real` or `integer` general MatrixMarket file.
/// Repeated coordinates are summed.
pub fn load_sparse_matrixmarket(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let banner = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(io_err(path))?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    let ok = tokens.len() == 5
        && tokens[0] == "%%matrixmarket"
        && tokens[1] == "matrix"
        && tokens[2] == "coordinate"
        && (tokens[3] == "real" || tokens[3] == "integer")
        && tokens[4] == "general";
    if !ok {
        return Err(Error::parse(path, format!("unsupported banner {banner:?}")));
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut m = DMatrix::<f64>::zeros(0, 0);
    let mut seen = 0usize;
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let lineno = n + 2;
        let bad = |what: &str| Error::parse(path, format!("line {lineno}: {what}"));
        match size {
            None => {
                let parsed: Vec<usize> = fields
                    .iter()
                    .map(|f| f.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("malformed size line"))?;
                if parsed.len() != 3 || parsed[0] == 0 || parsed[1] == 0 {
                    return Err(bad(
                        "size line must be `rows cols entries` with rows, cols > 0",
                    ));
                }
                size = Some((parsed[0], parsed[1], parsed[2]));
                m = DMatrix::zeros(parsed[0], parsed[1]);
            }
            Some((rows, cols, _)) => {
                if fields.len() != 3 {
                    return Err(bad("entry must be `row col value`"));
                }
                let i: usize = fields[0].parse().map_err(|_| bad("bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| bad("bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| bad("bad value"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(bad(&format!("index ({i}, {j}) outside {rows}x{cols}")));
                }
                m[(i - 1, j - 1)] += v;
                seen += 1;
            }
        }
    }
    let (_, _, declared) = size.ok_or_else(|| Error::parse(path, "missing size line"))?;
    if seen != declared {
        return Err(Error::parse(
            path,
            format!("header declares {declared} entries, found {seen}"),
        ));
    }
    let matrix = DataMatrix::new(m).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut ds = Dataset::from_matrix(matrix);
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

/// Writes the nonzero entries in column-major order.
pub fn write_matrixmarket(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let nnz = m.iter().filter(|&&v| !is_zero(v)).count();
    let mut body = format!(
        "%%MatrixMarket matrix coordinate real general\n{} {} {nnz}\n",
        m.nrows(),
        m.ncols()
    );
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !is_zero(v) {
                body.push_str(&format!("{} {} {v}\n", i + 1, j + 1));
            }
        }
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Population variance of each column of the raw values.
pub fn column_variances(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Keeps the `n` most variable columns (ties to the lower index), in their
/// original order. Datasets with at most `n` columns pass through.
pub fn select_variable_genes(ds: &Dataset, n: usize) -> Result<Dataset> {
    if ds.matrix.d_cols() <= n {
        let mut out = ds.clone();
        out.provenance.record(
            "select_variable_genes",
            &[("n", n.to_string()), ("kept", "all".into())],
        );
        return Ok(out);
    }
    let var = column_variances(ds.matrix.entries());
    let mut order: Vec<usize> = (0..var.len()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    let mut out = ds.select_columns(&keep)?;
    out.provenance.record(
        "select_variable_genes",
        &[("n", n.to_string()), ("variance", "raw population".into())],
    );
    Ok(out)
}

/// Result of the sparsity sweep: threshold percentage and surviving columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquarifyChoice {
    pub percent: u32,
    pub columns: Vec<usize>,
}

/// Sweeps `s = 1, …, 100` percent, keeping columns nonzero in at least
/// `s%` of rows, and picks the `s` whose kept count is closest to the row
/// count (smallest `s` on ties). Empty selections are never chosen.
pub fn squarify_choice(m: &DataMatrix) -> Result<SquarifyChoice> {
    let d_rows = m.d_rows();
    let nnz = m.nnz_col();
    let mut best: Option<(usize, SquarifyChoice)> = None;
    for s in 1..=100u32 {
        let columns: Vec<usize> = (0..nnz.len())
            .filter(|&j| 100 * nnz[j] >= s as usize * d_rows)
            .collect();
        if columns.is_empty() {
            continue;
        }
        let gap = d_rows.abs_diff(columns.len());
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((
                gap,
                SquarifyChoice {
                    percent: s,
                    columns,
                },
            ));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::Preprocessing("every sparsity threshold removes all columns".into()))
}

pub fn squarify_by_sparsity(ds: &Dataset) -> Result<Dataset> {
    let choice = squarify_choice(&ds.matrix)?;
    let mut out = ds.select_columns(&choice.columns)?;
    out.provenance.record(
        "squarify_by_sparsity",
        &[
            ("percent", choice.percent.to_string()),
            ("kept_cols", choice.columns.len().to_string()),
            ("threshold", "fraction of rows".into()),
        ],
    );
    Ok(out)
}
