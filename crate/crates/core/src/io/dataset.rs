use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{parse_f64, read_to_string, write_file};
use crate::error::{Error, Result};

/// A CSV of curves: header row holds the grid, each further row one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub grid: Vec<f64>,
    pub values: DMatrix<f64>,
}

pub fn write_curves_csv(path: &Path, grid: &[f64], values: &DMatrix<f64>) -> Result<()> {
    if values.ncols() != grid.len() {
        return Err(Error::shape(grid.len(), values.ncols()));
    }
    let header: Vec<String> = grid.iter().map(|g| g.to_string()).collect();
    write_matrix_csv(path, &header, values)
}

pub fn read_curves_csv(path: &Path) -> Result<CurveTable> {
    let text = read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let grid = header
        .split(',')
        .map(|f| parse_f64(path, 1, f))
        .collect::<Result<Vec<_>>>()?;
    let values = parse_rows(path, lines, grid.len())?;
    Ok(CurveTable { grid, values })
}

/// Comma-separated matrix with a free-form header row.
pub fn write_matrix_csv(path: &Path, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 20);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in values.row_iter() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Reads a matrix written by [`write_matrix_csv`]; returns header names too.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let values = parse_rows(path, lines, names.len())?;
    Ok((names, values))
}

fn parse_rows<'a>(
    path: &Path,
    lines: impl Iterator<Item = (usize, &'a str)>,
    width: usize,
) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            data.push(parse_f64(path, lineno, f)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width, &data))
}
