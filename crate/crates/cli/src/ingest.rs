//! Numeric CSV ingestion with optional standardization and an intercept
//! column.

use std::path::Path;

use alo_core::Dataset;
use ndarray::{Array1, Array2};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub header: bool,
    pub standardize: bool,
    /// Appended after standardization as the last column; it is penalized
    /// like every other column.
    pub intercept: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { header: true, standardize: false, intercept: false }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Column means and (population) standard deviations removed from the
    /// raw design, when standardizing.
    pub standardization: Option<(Vec<f64>, Vec<f64>)>,
}

/// Reads a rectangular numeric CSV; returns the rows and the column count.
pub fn read_numeric_csv(path: &Path, header: bool) -> Result<(Vec<f64>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::RaggedRows { path: path.into(), line, expected, found: record.len() });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CliError::Parse {
                path: path.into(),
                line,
                column: j + 1,
                cell: cell.to_string(),
            })?;
            values.push(v);
        }
    }
    Ok((values, width.unwrap_or(0)))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => CliError::RaggedRows {
            path: path.into(),
            line: pos.as_ref().map_or(0, |p| p.line()),
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => match e.into_kind() {
            csv::ErrorKind::Io(err) => CliError::io(path, err),
            other => CliError::Data { path: path.into(), msg: format!("{other:?}") },
        },
    }
}

pub fn ingest_csv(path_x: &Path, path_y: &Path, opts: IngestOptions) -> Result<Ingested> {
    let (xv, p) = read_numeric_csv(path_x, opts.header)?;
    let (yv, wy) = read_numeric_csv(path_y, opts.header)?;
    if xv.is_empty() {
        return Err(CliError::Data { path: path_x.into(), msg: "no data rows".into() });
    }
    if wy != 1 {
        return Err(CliError::Data { path: path_y.into(), msg: format!("expected 1 column, found {wy}") });
    }
    let n = xv.len() / p;
    if yv.len() != n {
        return Err(CliError::Data {
            path: path_y.into(),
            msg: format!("{} rows, but the design has {n}", yv.len()),
        });
    }
    let mut x = Array2::from_shape_vec((n, p), xv).expect("rectangular by construction");
    let standardization = if opts.standardize {
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for (j, mut col) in x.columns_mut().into_iter().enumerate() {
            let mean = col.sum() / n as f64;
            col.mapv_inplace(|v| v - mean);
            let sd = (col.dot(&col) / n as f64).sqrt();
            if !(sd > 0.0) {
                return Err(CliError::Data {
                    path: path_x.into(),
                    msg: format!("column {} is constant and cannot be standardized", j + 1),
                });
            }
            col.mapv_inplace(|v| v / sd);
            means.push(mean);
            sds.push(sd);
        }
        Some((means, sds))
    } else {
        None
    };
    if opts.intercept {
        x.push_column(Array1::ones(n).view()).expect("row count matches");
    }
    let dataset = Dataset::new(x, Array1::from(yv))?;
    Ok(Ingested { dataset, standardization })
}
