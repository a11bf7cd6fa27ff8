//! On-disk formats: curve CSV files, UCR archive files and model files.

mod dataset;
mod model_file;
mod ucr;

pub use dataset::{
    read_curves_csv, read_matrix_csv, write_curves_csv, write_matrix_csv, CurveTable,
};
pub use model_file::{ModelFile, NamedArray, MODEL_FORMAT_VERSION};
pub use ucr::{read_ucr, write_ucr, UcrData};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("non-numeric field `{}`", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("non-finite value `{}`", field.trim()),
        });
    }
    Ok(v)
}
