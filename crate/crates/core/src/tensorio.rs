//! Portable binary tensor container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    4 bytes  "EGOT"
//! dtype    u8       1 = f32, 2 = f64, 3 = u8
//! rank     u8
//! dims     rank × u64
//! data     row-major elements
//! ```
//!
//! Named bundles (checkpoints) use the `EGOB` magic followed by a
//! length-prefixed UTF-8 tag string, a `u32` entry count and, per entry, a
//! length-prefixed name and one tensor block.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"EGOT";
pub const BUNDLE_MAGIC: &[u8; 4] = b"EGOB";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
            TensorData::U8(_) => 3,
        }
    }

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
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::Container("rank exceeds 255".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&[self.data.code(), self.shape.len() as u8])?;
        for d in &self.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::F64(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::U8(v) => w.write_all(v)?,
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Container(format!("bad tensor magic {magic:?}")));
        }
        let mut head = [0u8; 2];
        read_exact(r, &mut head)?;
        let (code, rank) = (head[0], head[1] as usize);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(r, &mut b)?;
            shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| {
                Error::Container("dimension does not fit in usize".into())
            })?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::Container("element count overflows".into()))?;
        let data = match code {
            1 => {
                let bytes = read_vec(r, n, 4)?;
                TensorData::F32(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            2 => {
                let bytes = read_vec(r, n, 8)?;
                TensorData::F64(
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            3 => TensorData::U8(read_vec(r, n, 1)?),
            other => return Err(Error::Container(format!("unknown dtype code {other}"))),
        };
        Ok(Self { shape, data })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Container(format!("truncated container: {e}")))
}

fn read_vec<R: Read>(r: &mut R, n: usize, width: usize) -> Result<Vec<u8>> {
    let len = n
        .checked_mul(width)
        .ok_or_else(|| Error::Container("byte count overflows".into()))?;
    let mut buf = Vec::new();
    r.take(len as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Container(e.to_string()))?;
    if buf.len() != len {
        return Err(Error::Container("truncated tensor data".into()));
    }
    Ok(buf)
}

/// Ordered named tensors plus a free-form tag (used for config hashes).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorBundle {
    pub tag: String,
    pub entries: Vec<(String, RawTensor)>,
}

impl TensorBundle {
    pub fn get(&self, name: &str) -> Option<&RawTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        write_str(&mut out, &self.tag);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            write_str(&mut out, name);
            t.write_to(&mut out).expect("writing to a Vec cannot fail");
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::Container(format!("bad bundle magic {magic:?}")));
        }
        let tag = read_str(&mut r)?;
        let mut cnt = [0u8; 4];
        read_exact(&mut r, &mut cnt)?;
        let count = u32::from_le_bytes(cnt) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = read_str(&mut r)?;
            entries.push((name, RawTensor::read_from(&mut r)?));
        }
        if !r.is_empty() {
            return Err(Error::Container("trailing bytes after bundle".into()));
        }
        Ok(Self { tag, entries })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let mut len = [0u8; 4];
    read_exact(r, &mut len)?;
    let bytes = read_vec(r, u32::from_le_bytes(len) as usize, 1)?;
    String::from_utf8(bytes).map_err(|e| Error::Container(e.to_string()))
}
