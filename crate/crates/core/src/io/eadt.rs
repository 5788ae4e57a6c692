//! The `EADT` tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"EADT"`                         |
//! | 4      | 2    | format version, `1`                     |
//! | 6      | 1    | dtype: `0` bool (1 byte/pixel), `1` f32 |
//! | 7      | 4    | channels C                              |
//! | 11     | 4    | height H                                |
//! | 15     | 4    | width W                                 |
//! | 19     | ...  | C·H·W values, class-major, row-major    |
//!
//! Boolean pixels are written as `0x00` / `0x01`; any other byte is rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ImageTensor, ProbMap, Raster, Shape};

pub const MAGIC: [u8; 4] = *b"EADT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    Bool = 0,
    F32 = 1,
}

impl DType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DType::Bool),
            1 => Ok(DType::F32),
            other => Err(Error::MalformedHeader(format!("unknown dtype tag {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            DType::Bool => 1,
            DType::F32 => 4,
        }
    }
}

/// A decoded tensor file; the dtype tag decides the variant.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorFile {
    Mask(BinaryMask),
    Prob(ProbMap),
}

impl TensorFile {
    pub fn shape(&self) -> Shape {
        match self {
            TensorFile::Mask(m) => m.shape(),
            TensorFile::Prob(p) => p.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorFile::Mask(_) => DType::Bool,
            TensorFile::Prob(_) => DType::F32,
        }
    }

    pub fn into_mask(self) -> Result<BinaryMask> {
        match self {
            TensorFile::Mask(m) => Ok(m),
            TensorFile::Prob(_) => Err(Error::MalformedHeader(
                "expected a boolean mask, found a float tensor".into(),
            )),
        }
    }

    pub fn into_prob_map(self) -> Result<ProbMap> {
        match self {
            TensorFile::Prob(p) => Ok(p),
            TensorFile::Mask(_) => Err(Error::MalformedHeader(
                "expected a float tensor, found a boolean mask".into(),
            )),
        }
    }

    pub fn into_image(self) -> Result<ImageTensor> {
        self.into_prob_map().map(ProbMap::into_image)
    }
}

/// Element types that have an `EADT` encoding.
pub trait EadtEncode: Raster {
    const DTYPE: DType;
    fn write_elem(v: Self::Elem, out: &mut Vec<u8>);
}

impl EadtEncode for BinaryMask {
    const DTYPE: DType = DType::Bool;
    fn write_elem(v: bool, out: &mut Vec<u8>) {
        out.push(v as u8);
    }
}

impl EadtEncode for ProbMap {
    const DTYPE: DType = DType::F32;
    fn write_elem(v: f32, out: &mut Vec<u8>) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl EadtEncode for ImageTensor {
    const DTYPE: DType = DType::F32;
    fn write_elem(v: f32, out: &mut Vec<u8>) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode<T: EadtEncode>(t: &T) -> Vec<u8> {
    let shape = t.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + shape.len() * T::DTYPE.width());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE as u8);
    for dim in [shape.channels, shape.height, shape.width] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in t.as_slice() {
        T::write_elem(v, &mut out);
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("missing EADT magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedData {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let dtype = DType::from_tag(bytes[6])?;
    let (c, h, w) = (u32_at(bytes, 7), u32_at(bytes, 11), u32_at(bytes, 15));
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension in {c}x{h}x{w}"
        )));
    }
    let shape = Shape::new(c, h, w);
    let payload_len = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| Error::MalformedHeader(format!("dimensions {shape} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(Error::TruncatedData {
            expected: HEADER_LEN + payload_len,
            actual: bytes.len(),
        });
    }
    if payload.len() > payload_len {
        return Err(Error::TrailingBytes(payload.len() - payload_len));
    }
    match dtype {
        DType::Bool => {
            let mut data = Vec::with_capacity(shape.len());
            for (i, &b) in payload.iter().enumerate() {
                match b {
                    0 => data.push(false),
                    1 => data.push(true),
                    other => {
                        return Err(Error::MalformedHeader(format!(
                            "boolean pixel {i} has byte value {other}"
                        )))
                    }
                }
            }
            BinaryMask::new(shape, data).map(TensorFile::Mask)
        }
        DType::F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
                .collect();
            ProbMap::new(shape, data).map(TensorFile::Prob)
        }
    }
}

pub fn write_tensor<T: EadtEncode>(path: impl AsRef<Path>, t: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
