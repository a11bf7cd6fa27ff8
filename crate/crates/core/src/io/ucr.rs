//! UCR time-series archive files.
//!
//! One series per line: a class label followed by the readings, separated by
//! tabs (2018 archive), commas (older releases) or runs of spaces. Labels are
//! kept but unused by the unsupervised pipeline. Readings are placed on an
//! equally spaced grid over `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{parse_f64, read_to_string, write_file};
use crate::bspline::uniform_grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UcrData {
    pub labels: Vec<String>,
    /// `n x T` readings.
    pub values: DMatrix<f64>,
    pub grid: Vec<f64>,
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').collect()
    } else if line.contains(',') {
        line.split(',').collect()
    } else {
        line.split_whitespace().collect()
    }
}

pub fn read_ucr(path: &Path) -> Result<UcrData> {
    let text = read_to_string(path)?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields = split_fields(line);
        let readings = fields.len().saturating_sub(1);
        match width {
            None => {
                if readings < 2 {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: "a series needs a label and at least 2 readings".into(),
                    });
                }
                width = Some(readings);
            }
            Some(w) if w != readings => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("ragged row: expected {w} readings, found {readings}"),
                });
            }
            Some(_) => {}
        }
        labels.push(fields[0].trim().to_string());
        for f in &fields[1..] {
            data.push(parse_f64(path, lineno, f)?);
        }
    }
    let width = width.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let values = DMatrix::from_row_slice(labels.len(), width, &data);
    Ok(UcrData {
        labels,
        values,
        grid: uniform_grid(width),
    })
}

/// Tab-separated, label first, full round-trip precision.
pub fn write_ucr(path: &Path, labels: &[String], values: &DMatrix<f64>) -> Result<()> {
    if labels.len() != values.nrows() {
        return Err(Error::shape(values.nrows(), labels.len()));
    }
    let mut out = String::new();
    for (label, row) in labels.iter().zip(values.row_iter()) {
        out.push_str(label);
        for v in row.iter() {
            write!(out, "\t{v}").expect("write to string");
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}
