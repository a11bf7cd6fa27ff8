//! Binary model container.
//!
//! ```text
//! magic      8 bytes   "NLFPCAMF"
//! version    u32 LE
//! header_len u32 LE
//! header     header_len bytes of UTF-8 JSON (kind, basis, dims, activation,
//!            seed, array manifest of names and shapes)
//! payload    f64 LE values of every array, in manifest order
//! checksum   32 bytes, SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_file;
use crate::bspline::BasisDescriptor;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NLFPCAMF";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub version: u32,
    pub kind: String,
    pub basis: BasisDescriptor,
    pub dims: BTreeMap<String, usize>,
    pub activation: Option<String>,
    pub seed: Option<u64>,
    pub arrays: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    basis: BasisDescriptor,
    dims: BTreeMap<String, usize>,
    activation: Option<String>,
    seed: Option<u64>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

impl ModelFile {
    pub fn new(kind: impl Into<String>, basis: BasisDescriptor) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            kind: kind.into(),
            basis,
            dims: BTreeMap::new(),
            activation: None,
            seed: None,
            arrays: Vec::new(),
        }
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::ModelFile(format!("missing array `{name}`")))
    }

    pub fn dim(&self, name: &str) -> Result<usize> {
        self.dims
            .get(name)
            .copied()
            .ok_or_else(|| Error::ModelFile(format!("missing dimension `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for a in &self.arrays {
            let expected: usize = a.shape.iter().product();
            if expected != a.data.len() {
                return Err(Error::ModelFile(format!(
                    "array `{}` has {} values but shape {:?}",
                    a.name,
                    a.data.len(),
                    a.shape
                )));
            }
        }
        let header = Header {
            kind: self.kind.clone(),
            basis: self.basis,
            dims: self.dims.clone(),
            activation: self.activation.clone(),
            seed: self.seed,
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)
            .map_err(|e| Error::ModelFile(format!("header encoding: {e}")))?;
        let payload: usize = self.arrays.iter().map(|a| a.data.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 + CHECKSUM_LEN || &bytes[..8] != MAGIC {
            return Err(Error::ModelFile("not a model file".into()));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(Error::ModelFile("checksum mismatch".into()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::ModelFile("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&body[16..header_end])
            .map_err(|e| Error::ModelFile(format!("header decoding: {e}")))?;
        let mut cursor = header_end;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let count: usize = entry.shape.iter().product();
            let end = cursor + count * 8;
            if end > body.len() {
                return Err(Error::ModelFile(format!(
                    "truncated array `{}`",
                    entry.name
                )));
            }
            let data = body[cursor..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            cursor = end;
            arrays.push(NamedArray {
                name: entry.name,
                shape: entry.shape,
                data,
            });
        }
        if cursor != body.len() {
            return Err(Error::ModelFile("trailing bytes after payload".into()));
        }
        Ok(Self {
            version,
            kind: header.kind,
            basis: header.basis,
            dims: header.dims,
            activation: header.activation,
            seed: header.seed,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(data: Vec<f64>) -> ModelFile {
        let mut f = ModelFile::new(
            "test",
            BasisDescriptor {
                count: 4,
                degree: 3,
            },
        );
        f.dims.insert("k".into(), 2);
        f.activation = Some("tanh".into());
        f.seed = Some(17);
        let n = data.len();
        f.arrays.push(NamedArray::new("x", vec![n], data));
        f.arrays.push(NamedArray::new(
            "y",
            vec![1, 2],
            vec![-0.0, f64::MIN_POSITIVE],
        ));
        f
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(data in prop::collection::vec(any::<f64>(), 0..64)) {
            let f = sample(data.clone());
            let back = ModelFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.arrays[0].data), bits(&data));
            prop_assert_eq!(&back.kind, "test");
            prop_assert_eq!(back.seed, Some(17));
        }
    }

    #[test]
    fn corrupted_bytes_fail_checksum() {
        let mut bytes = sample(vec![1.0, 2.0]).to_bytes().unwrap();
        let i = bytes.len() - 40;
        bytes[i] ^= 1;
        assert!(matches!(
            ModelFile::from_bytes(&bytes),
            Err(Error::ModelFile(ref m)) if m.contains("checksum")
        ));
        assert!(ModelFile::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn shape_mismatch_rejected_on_save() {
        let mut f = sample(vec![1.0]);
        f.arrays[0].shape = vec![3];
        assert!(f.to_bytes().is_err());
    }
}
