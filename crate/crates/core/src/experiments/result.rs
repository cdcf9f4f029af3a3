use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loocv::LoocvCurve;

use super::config::{ExperimentKind, Scale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ExperimentKind,
    pub scale: Scale,
    pub master_seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCurve {
    pub label: String,
    pub problem_hash: String,
    pub curve: LoocvCurve,
}

/// Tabular experiment output. The first `n_keys` columns identify a row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub n_keys: usize,
    pub rows: Vec<Vec<Cell>>,
    /// Named scalars derived from the rows (fits, boundaries, panel fractions).
    pub summary: Vec<(String, f64)>,
    pub curves: Vec<LabeledCurve>,
}

impl ExperimentResult {
    pub(crate) fn new(metadata: Metadata, columns: &[&str], n_keys: usize) -> Self {
        Self {
            metadata,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            n_keys,
            rows: Vec::new(),
            summary: Vec::new(),
            curves: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub(crate) fn add_summary(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), value));
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<Cell>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("no column {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    /// Numeric column; text cells become NaN.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self
            .column(name)?
            .iter()
            .map(|c| c.as_f64().unwrap_or(f64::NAN))
            .collect())
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Rows where every `(column, value)` condition matches.
    pub fn filter_rows(&self, conditions: &[(&str, Cell)]) -> Vec<&Vec<Cell>> {
        let idx: Vec<(usize, &Cell)> = conditions
            .iter()
            .map(|(c, v)| (self.column_index(c).expect("known column"), v))
            .collect();
        self.rows
            .iter()
            .filter(|r| idx.iter().all(|(j, v)| &r[*j] == *v))
            .collect()
    }

    /// CSV with `#`-prefixed metadata and summary lines ahead of the header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.metadata;
        writeln!(w, "# kind={}", m.kind)?;
        writeln!(
            w,
            "# scale={}",
            match m.scale {
                Scale::Desk => "desk (reduced counts)",
                Scale::Paper => "paper",
            }
        )?;
        writeln!(w, "# master_seed={}", m.master_seed)?;
        writeln!(w, "# config_hash={}", m.config_hash)?;
        for (k, v) in &self.summary {
            writeln!(w, "# {k}={v}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|c| c.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}
