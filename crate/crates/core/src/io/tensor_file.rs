//! `.gsnt` tensor files.
//!
//! Layout, all little-endian: `b"GSNT"`, version `u32` (1), dtype code `u32`
//! (1 = f32, 2 = f64), rank `u32` (4), four `u64` dims, then the row-major
//! payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"GSNT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 * 8;

/// A tensor file of either element type.
#[derive(Debug, Clone, PartialEq)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn shape(&self) -> Shape {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            DynTensor::F32(_) => DType::F32,
            DynTensor::F64(_) => DType::F64,
        }
    }

    /// Converts to `T`, exactly when the element type already matches.
    pub fn into_tensor<T: Element>(self) -> Tensor<T> {
        match self {
            DynTensor::F32(t) => t.cast(),
            DynTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.numel() * T::DTYPE.size_of());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&T::DTYPE.code().to_le_bytes());
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in t.shape().0 {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

/// Validates the whole header against the buffer length before decoding.
pub fn decode(bytes: &[u8]) -> Result<DynTensor> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"GSNT\""));
    }
    let version = u32_at(bytes, 4)?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let code = u32_at(bytes, 8)?;
    let dtype = DType::from_code(code).ok_or_else(|| Error::format(8, format!("unknown dtype code {code}")))?;
    let rank = u32_at(bytes, 12)?;
    if rank != 4 {
        return Err(Error::format(12, format!("rank {rank}, expected 4")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 16 + 8 * i;
        let raw = bytes
            .get(off..off + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| Error::format(off as u64, "truncated header"))?;
        *d = usize::try_from(raw).map_err(|_| Error::format(off as u64, format!("dim {raw} too large")))?;
    }
    let shape = Shape(dims);
    let expected = shape
        .checked_numel()
        .and_then(|n| n.checked_mul(dtype.size_of()))
        .ok_or_else(|| Error::format(16, format!("dims {shape} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            (HEADER_LEN + payload.len().min(expected)) as u64,
            format!("payload is {} bytes, dims {shape} need {expected}", payload.len()),
        ));
    }
    Ok(match dtype {
        DType::F32 => DynTensor::F32(decode_payload(shape, payload)?),
        DType::F64 => DynTensor::F64(decode_payload(shape, payload)?),
    })
}

fn decode_payload<T: Element>(shape: Shape, payload: &[u8]) -> Result<Tensor<T>> {
    let size = T::DTYPE.size_of();
    Tensor::from_vec(shape, payload.chunks_exact(size).map(T::read_le).collect())
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn write_tensor<T: Element>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    write_atomic(path.as_ref(), &encode(t))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DynTensor> {
    decode(&fs::read(path)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// `out.gsnt` with level 1 becomes `out_L1.gsnt`.
pub fn level_path(base: impl AsRef<Path>, level: usize) -> PathBuf {
    let base = base.as_ref();
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_L{level}.{}", ext.to_string_lossy()),
        None => format!("{stem}_L{level}"),
    };
    base.with_file_name(name)
}
