//! `FGMR` tensor container: magic, version, dtype code, rank, u64 dims,
//! then the little-endian row-major payload.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"FGMR";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 255;

/// A tensor read back in whatever precision it was stored in.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::F64(_) => DType::F64,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            Self::F32(t) => t.dims(),
            Self::F64(t) => t.dims(),
        }
    }

    /// Converts to `S` (exact when the stored dtype is `S`).
    pub fn into_tensor<S: Scalar>(self) -> Tensor<S> {
        match self {
            Self::F32(t) => t.cast(),
            Self::F64(t) => t.cast(),
        }
    }
}

pub fn encode_tensor<S: Scalar>(t: &Tensor<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * t.rank() + t.len() * S::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(S::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<StoredTensor> {
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < 10 {
        return Err(truncated(10));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let code = bytes[8];
    let dtype = DType::from_code(code).ok_or(Error::UnknownDtype {
        path: path.to_path_buf(),
        code,
    })?;
    let rank = bytes[9] as usize;
    let header = 10 + 8 * rank;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<usize> = bytes[10..header]
        .chunks(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let payload = &bytes[header..];
    let expected = n * dtype.size();
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: payload.len() as u64,
        });
    }
    fn read<S: Scalar>(dims: Vec<usize>, payload: &[u8]) -> Result<Tensor<S>> {
        let data = payload.chunks(S::DTYPE.size()).map(S::read_le).collect();
        Tensor::new(dims, data)
    }
    Ok(match dtype {
        DType::F32 => StoredTensor::F32(read(dims, payload)?),
        DType::F64 => StoredTensor::F64(read(dims, payload)?),
    })
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_tensor<S: Scalar>(path: &Path, t: &Tensor<S>) -> Result<()> {
    if t.rank() > MAX_RANK {
        return Err(Error::InvalidArgument(format!("rank {} too large for FGMR", t.rank())));
    }
    write_atomic(path, &encode_tensor(t))
}

pub fn read_tensor_stored(path: &Path) -> Result<StoredTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Reads a tensor, converting to `S` if it was stored at the other precision.
pub fn read_tensor<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    Ok(read_tensor_stored(path)?.into_tensor())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
