//! IDX container (big-endian header, as used by the MNIST corpus).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0x08 => Some(IdxType::U8),
            0x0B => Some(IdxType::I16),
            0x0C => Some(IdxType::I32),
            0x0D => Some(IdxType::F32),
            0x0E => Some(IdxType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            IdxType::U8 => 1,
            IdxType::I16 => 2,
            IdxType::I32 | IdxType::F32 => 4,
            IdxType::F64 => 8,
        }
    }
}

/// A decoded IDX array holding the raw element values.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dtype: IdxType,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl IdxArray {
    /// Tensor view; unsigned-byte data is mapped to `[0, 1]` by dividing by 255.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let scale = if self.dtype == IdxType::U8 { 1.0 / 255.0 } else { 1.0 };
        Tensor::new(self.shape.clone(), self.values.iter().map(|v| v * scale).collect())
    }

    /// Raw values as non-negative integer labels.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.values
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidArgument(format!("label value {v} is not a class index")))
                }
            })
            .collect()
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::IdxFormat {
        offset,
        message: message.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(
            0,
            format!("bad magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3]),
        ));
    }
    let dtype = IdxType::from_code(bytes[2])
        .ok_or_else(|| format_err(2, format!("unsupported element type 0x{:02x}", bytes[2])))?;
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(format_err(3, "zero dimensions"));
    }
    let mut shape = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let at = 4 + 4 * d;
        let raw = bytes
            .get(at..at + 4)
            .ok_or_else(|| format_err(bytes.len(), format!("truncated size of dimension {d}")))?;
        let size = u32::from_be_bytes(raw.try_into().unwrap()) as usize;
        if size == 0 {
            return Err(format_err(at, format!("dimension {d} is zero")));
        }
        shape.push(size);
    }
    let start = 4 + 4 * ndim;
    let count: usize = shape.iter().product();
    let end = start + count * dtype.width();
    if bytes.len() < end {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {} bytes, found {}", end - start, bytes.len() - start),
        ));
    }
    if bytes.len() > end {
        return Err(format_err(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    let payload = &bytes[start..end];
    let values = match dtype {
        IdxType::U8 => payload.iter().map(|&b| f64::from(b)).collect(),
        IdxType::I16 => payload
            .chunks_exact(2)
            .map(|c| f64::from(i16::from_be_bytes([c[0], c[1]])))
            .collect(),
        IdxType::I32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(i32::from_be_bytes(c.try_into().unwrap())))
            .collect(),
        IdxType::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_be_bytes(c.try_into().unwrap())))
            .collect(),
        IdxType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(IdxArray {
        dtype,
        shape,
        values,
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::IdxFormat { offset, message } => Error::IdxFormat {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
