//! TNSR binary tensors and named-tensor archives.
//!
//! A tensor file is `"TNSR"`, version `u8 = 1`, dtype `u8`, rank `u8`,
//! `rank` little-endian `u32` dims, then the row-major little-endian payload.
//!
//! An archive is `"TNSRPACK"`, a little-endian `u32` header length, a UTF-8
//! text header, a `u32` entry count, then per entry a `u16` name length, the
//! name, a `u64` byte length and that many bytes of an embedded tensor file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";
const ARCHIVE_MAGIC: &[u8; 8] = b"TNSRPACK";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    U8 = 2,
    I32 = 3,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => DType::F32,
            1 => DType::F64,
            2 => DType::U8,
            3 => DType::I32,
            other => return Err(Error::Format(format!("unknown TNSR dtype {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl Tensor {
    fn checked(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let t = Self { dims, data };
        if t.dims.len() > u8::MAX as usize {
            return format_err("tensor rank exceeds 255");
        }
        if t.element_count() != t.len() {
            return Err(Error::Argument(format!(
                "tensor dims {:?} need {} elements, got {}",
                t.dims,
                t.element_count(),
                t.len()
            )));
        }
        Ok(t)
    }

    pub fn f32(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        Self::checked(dims, TensorData::F32(data))
    }
    pub fn f64(dims: Vec<u32>, data: Vec<f64>) -> Result<Self> {
        Self::checked(dims, TensorData::F64(data))
    }
    pub fn u8(dims: Vec<u32>, data: Vec<u8>) -> Result<Self> {
        Self::checked(dims, TensorData::U8(data))
    }
    pub fn i32(dims: Vec<u32>, data: Vec<i32>) -> Result<Self> {
        Self::checked(dims, TensorData::I32(data))
    }

    /// Float tensor stored as float32.
    pub fn f32_from_f64(dims: Vec<u32>, data: &[f64]) -> Result<Self> {
        Self::f32(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Float payload widened to f64; integer tensors are rejected.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        match &self.data {
            TensorData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Ok(v.clone()),
            _ => format_err(format!("expected a float tensor, found {:?}", self.dtype())),
        }
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Ok(v),
            _ => format_err(format!("expected a uint8 tensor, found {:?}", self.dtype())),
        }
    }

    /// Fails unless the dims equal `want`.
    pub fn expect_dims(&self, want: &[u32]) -> Result<()> {
        if self.dims != want {
            return Err(Error::Argument(format!("expected tensor dims {want:?}, found {:?}", self.dims)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + self.len() * self.dtype().size());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype() as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses a tensor, requiring the buffer to hold exactly one tensor.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return format_err(format!("{} trailing bytes after TNSR payload", bytes.len() - used));
        }
        Ok(t)
    }

    fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 7 || &bytes[..4] != MAGIC {
            return format_err("missing TNSR magic");
        }
        if bytes[4] != VERSION {
            return format_err(format!("unsupported TNSR version {}", bytes[4]));
        }
        let dtype = DType::from_code(bytes[5])?;
        let rank = bytes[6] as usize;
        let mut off = 7;
        if bytes.len() < off + 4 * rank {
            return format_err("truncated TNSR dims");
        }
        let dims: Vec<u32> = (0..rank)
            .map(|i| u32::from_le_bytes(bytes[off + 4 * i..off + 4 * i + 4].try_into().unwrap()))
            .collect();
        off += 4 * rank;
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let need = count * dtype.size();
        if bytes.len() < off + need {
            return format_err(format!("truncated TNSR payload: need {need} bytes, have {}", bytes.len() - off));
        }
        let p = &bytes[off..off + need];
        let data = match dtype {
            DType::F32 => TensorData::F32(p.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F64 => TensorData::F64(p.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::U8 => TensorData::U8(p.to_vec()),
            DType::I32 => TensorData::I32(p.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        Ok((Self { dims, data }, off + need))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| io_context(e, path))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Ordered collection of named tensors with a text header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub header: String,
    pub entries: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn new(header: impl Into<String>) -> Self {
        Self { header: header.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("archive has no tensor named {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let body = t.to_bytes();
            out.extend_from_slice(&(body.len() as u64).to_le_bytes());
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != ARCHIVE_MAGIC {
            return format_err("missing TNSRPACK magic");
        }
        let hlen = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let header = String::from_utf8(cur.take(hlen)?.to_vec()).map_err(|_| Error::Format("archive header is not UTF-8".into()))?;
        let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(cur.take(nlen)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let blen = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
            let t = Tensor::from_bytes(cur.take(blen)?)?;
            entries.push((name, t));
        }
        if cur.pos != bytes.len() {
            return format_err("trailing bytes after archive");
        }
        Ok(Self { header, entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| io_context(e, path))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return format_err("truncated archive");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
