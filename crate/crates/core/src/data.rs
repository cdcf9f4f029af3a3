//! Raw regression data and the CSV loader.
//!
//! Loader rules:
//! - the first row is a header; the target column is selected by name;
//! - a row with a missing field (empty, `NA`, `NaN`, `nan`, `?`) anywhere is dropped;
//! - a feature column is numeric when every kept value parses as a finite float,
//!   otherwise it is categorical and one-hot encoded with its levels sorted
//!   lexicographically and the first level dropped;
//! - output columns follow header order, with each categorical column expanded in
//!   place into `name=level` indicator columns.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MISSING_MARKERS: &[&str] = &["", "na", "nan", "?", "null"];

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
}

impl RawDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::invalid(format!(
                "X has {n} rows but Y has {} entries",
                y.len()
            )));
        }
        if feature_names.len() != d {
            return Err(Error::invalid(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        if d == 0 {
            return Err(Error::invalid("at least one covariate column is required"));
        }
        if n < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 observations, got {n}"
            )));
        }
        if d >= n {
            return Err(Error::invalid(format!(
                "need fewer covariates than observations (D = {d}, N = {n})"
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in X or Y"));
        }
        Ok(Self {
            x,
            y,
            feature_names,
        })
    }

    /// Builds a dataset from generic column names `x0, x1, ...`.
    pub fn from_matrix(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|d| format!("x{d}")).collect();
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `indices` of this dataset, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let d = self.d();
        let x = DMatrix::from_fn(indices.len(), d, |i, j| self.x[(indices[i], j)]);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        Self::new(x, y, self.feature_names.clone())
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub target: String,
    /// Field delimiter; `None` sniffs `;` vs `,` from the header line.
    pub delimiter: Option<u8>,
}

impl CsvOptions {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            delimiter: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawDataset> {
    let mut text = String::new();
    File::open(path.as_ref())?.read_to_string(&mut text)?;
    read_csv(&text, opts)
}

fn is_missing(field: &str) -> bool {
    let f = field.trim().to_ascii_lowercase();
    MISSING_MARKERS.contains(&f.as_str())
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    }
}

fn parse_finite(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn read_csv(text: &str, opts: &CsvOptions) -> Result<RawDataset> {
    let delimiter = opts.delimiter.unwrap_or_else(|| sniff_delimiter(text));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, "header"))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = header
        .iter()
        .position(|h| h == &opts.target)
        .ok_or_else(|| Error::Data {
            row: 1,
            column: opts.target.clone(),
            message: format!("target column not found in header {header:?}"),
        })?;

    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, "-"))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().any(is_missing) {
            continue;
        }
        rows.push((line, record.iter().map(|f| f.trim().to_string()).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Data {
            row: 0,
            column: "-".into(),
            message: "no complete rows".into(),
        });
    }

    let mut y = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        let v = parse_finite(&fields[target_idx]).ok_or_else(|| Error::Data {
            row: *line,
            column: header[target_idx].clone(),
            message: format!(
                "target value {:?} is not a finite number",
                fields[target_idx]
            ),
        })?;
        y.push(v);
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        let parsed: Option<Vec<f64>> = rows.iter().map(|(_, f)| parse_finite(&f[j])).collect();
        match parsed {
            Some(col) => {
                columns.push(col);
                names.push(name.clone());
            }
            None => {
                let levels: BTreeSet<&str> = rows.iter().map(|(_, f)| f[j].as_str()).collect();
                for level in levels.iter().skip(1) {
                    columns.push(
                        rows.iter()
                            .map(|(_, f)| if f[j] == *level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    names.push(format!("{name}={level}"));
                }
            }
        }
    }

    let n = rows.len();
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    RawDataset::new(x, DVector::from_vec(y), names)
}

fn csv_error(e: csv::Error, column: &str) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Data {
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}
