//! VTB binary tensor files.
//!
//! Layout, all multi-byte values little-endian:
//!
//! ```text
//! "VTB1"            4 bytes magic
//! dtype             u8   (1 = f32, 2 = f64, 3 = u8)
//! ndim              u8
//! dims              ndim x u64
//! payload           row-major values
//! ```
//!
//! Readers reject a wrong magic, unknown dtypes, truncated payloads and
//! trailing bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

pub const MAGIC: &[u8; 4] = b"VTB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
    U8 = 3,
}

impl DType {
    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            3 => Ok(DType::U8),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("{} dimensions exceed u8", dims.len())));
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} hold {count} values but payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn u8(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(dims, TensorData::U8(data))
    }

    pub fn from_matrix(m: &RowMatrix) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            data: TensorData::F64(m.as_slice().to_vec()),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Values widened to f64 regardless of the stored dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::F64(v) => v.iter().map(|&x| x as f32).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn into_matrix(self) -> Result<RowMatrix> {
        match self.dims.as_slice() {
            &[r, c] => RowMatrix::from_vec(r, c, self.to_f64()),
            &[n] => RowMatrix::from_vec(1, n, self.to_f64()),
            other => Err(Error::Format(format!("expected a 2-D tensor, got dims {other:?}"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.data.len() * self.dtype().size();
        let mut out = Vec::with_capacity(6 + 8 * self.dims.len() + payload);
        out.extend_from_slice(MAGIC);
        out.push(self.dtype() as u8);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected \"VTB1\"".into()));
        }
        let dtype = DType::from_code(bytes[4])?;
        let ndim = bytes[5] as usize;
        let header = 6 + 8 * ndim;
        if bytes.len() < header {
            return Err(Error::Format(format!(
                "truncated header: {} bytes, need {header}",
                bytes.len()
            )));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for chunk in bytes[6..header].chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().unwrap());
            let d = usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} too large")))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Format("element count overflows".into()))?;
            dims.push(d);
        }
        let need = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let payload = &bytes[header..];
        if payload.len() < need {
            return Err(Error::Format(format!(
                "truncated payload: {} bytes, need {need}",
                payload.len()
            )));
        }
        if payload.len() > need {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - need
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
