use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Environment variable naming the directory with the four MNIST IDX files.
pub const MNIST_ENV: &str = "PETRI_MNIST_DIR";

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an unsigned-byte IDX file and checks its magic number.
pub fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::DataUnavailable(format!("{} not found", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    parse_idx(&bytes, expected_magic)
}

pub(crate) fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or(Error::TruncatedPayload {
                expected: 4 * i + 4,
                found: bytes.len(),
            })
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(Error::BadMagic {
            found: magic,
            expected: expected_magic,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims: Vec<usize> = (1..=ndims).map(|i| word(i).map(|d| d as usize)).collect::<Result<_>>()?;
    let header = 4 * (ndims + 1);
    let len: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(Error::TruncatedPayload {
            expected: len,
            found: payload.len(),
        });
    }
    if payload.len() > len {
        return Err(Error::DimensionMismatch(format!(
            "header {dims:?} covers {len} bytes, payload has {}",
            payload.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

/// Images as `(n, rows·cols)` with pixels scaled to `[0, 1]`.
pub fn read_images<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let a = read_idx(path, IMAGE_MAGIC)?;
    let n = a.dims[0];
    let px = a.dims[1] * a.dims[2];
    let scale = S::one() / S::lit(255.0);
    let data = a.data.iter().map(|&b| S::lit(b as f64) * scale).collect();
    Tensor::new(vec![n, px], data)
}

/// Labels as class indices.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let a = read_idx(path, LABEL_MAGIC)?;
    if let Some(&bad) = a.data.iter().find(|&&l| l > 9) {
        return Err(Error::DimensionMismatch(format!("label {bad} outside 0..=9")));
    }
    Ok(a.data)
}

/// Explicit directory, else `$PETRI_MNIST_DIR`, else `data/mnist` at the
/// workspace root.
pub fn mnist_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(MNIST_ENV) {
        return PathBuf::from(p);
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}
