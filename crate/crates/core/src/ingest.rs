//! Headered CSV → BoundedDataset, enforcing the row bound B.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::BoundedDataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSpec {
    Index(usize),
    Name(String),
}

impl LabelSpec {
    /// Digits are read as a zero-based index, anything else as a column name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelSpec::Index(i),
            Err(_) => LabelSpec::Name(s.to_string()),
        }
    }

    fn resolve(&self, header: &[String]) -> Result<usize> {
        match self {
            LabelSpec::Index(i) if *i < header.len() => Ok(*i),
            LabelSpec::Index(i) => {
                Err(Error::InvalidParameter(format!("label index {i} out of range for {} columns", header.len())))
            }
            LabelSpec::Name(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidParameter(format!("no column named {name:?}"))),
        }
    }
}

/// What to do with rows whose norm exceeds the declared B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundPolicy {
    /// Drop offending rows and report their indices.
    Declared,
    /// Refuse the file, listing every offending row.
    #[default]
    Reject,
    /// Rescale offending rows to norm exactly B.
    Clip,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: BoundedDataset,
    pub header: Vec<String>,
    /// Zero-based data-row indices (header excluded) in the original file.
    pub dropped: Vec<usize>,
    pub clipped: Vec<usize>,
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelSpec, bound: f64, policy: BoundPolicy) -> Result<LoadedData> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(&text, label, bound, policy)
}

pub fn parse_csv(text: &str, label: &LabelSpec, bound: f64, policy: BoundPolicy) -> Result<LoadedData> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("row bound {bound} must be positive")));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let d = header.len();
    let label_column = label.resolve(&header)?;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != d {
            return Err(Error::Parse { line, message: format!("expected {d} fields, found {}", record.len()) });
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("column {:?}: {field:?} is not a number", header[k]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("column {:?}: non-finite value", header[k]) });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput("file has a header but no data rows".into()));
    }
    let data = DMatrix::from_row_slice(rows, d, &values);
    let over: Vec<usize> = (0..rows).filter(|&i| data.row(i).norm() > bound).collect();
    let (dataset, dropped, clipped) = match policy {
        BoundPolicy::Reject => {
            if !over.is_empty() {
                return Err(Error::RefusedRows { rows: over, bound });
            }
            (BoundedDataset::new(data, bound, label_column)?, vec![], vec![])
        }
        BoundPolicy::Clip => {
            let (ds, touched) = BoundedDataset::clipped(data, bound, label_column)?;
            (ds, vec![], touched)
        }
        BoundPolicy::Declared => {
            let keep: Vec<usize> = (0..rows).filter(|i| !over.contains(i)).collect();
            if keep.is_empty() {
                return Err(Error::InvalidInput(format!("every row exceeds the declared bound {bound}")));
            }
            let kept = data.select_rows(&keep);
            (BoundedDataset::new(kept, bound, label_column)?, over, vec![])
        }
    };
    if !dropped.is_empty() || !clipped.is_empty() {
        log::info!("row bound {bound}: dropped {} rows, clipped {} rows", dropped.len(), clipped.len());
    }
    Ok(LoadedData { dataset, header, dropped, clipped })
}
