//! Little-endian cursor helpers shared by both container formats.

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::corrupt(
                field,
                format!(
                    "truncated at offset {}: need {n} bytes, {} left",
                    self.pos,
                    self.remaining()
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        Ok(self.bytes(N, field)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.array::<1>(field)?[0])
    }

    pub fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(field)?))
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(field)?))
    }

    pub fn f32(&mut self, field: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(field)?))
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(field)?))
    }

    /// 16-bit length-prefixed UTF-8 string.
    pub fn name(&mut self, field: &str) -> Result<String> {
        let len = self.u16(field)? as usize;
        let raw = self.bytes(len, field)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::corrupt(field, "name is not valid UTF-8"))
    }

    /// Shape as a u8 rank followed by u32 dimensions.
    pub fn shape(&mut self, field: &str) -> Result<Vec<usize>> {
        let ndim = self.u8(field)? as usize;
        if ndim == 0 {
            return Err(Error::corrupt(field, "tensor rank is zero"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = self.u32(field)? as usize;
            if d == 0 {
                return Err(Error::corrupt(field, "zero-length dimension"));
            }
            shape.push(d);
        }
        Ok(shape)
    }
}

pub(crate) fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::invalid(format!("name longer than {} bytes", u16::MAX)))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

pub(crate) fn put_shape(out: &mut Vec<u8>, shape: &[usize]) -> Result<()> {
    let ndim = u8::try_from(shape.len())
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::invalid(format!("unsupported tensor rank {}", shape.len())))?;
    out.push(ndim);
    for &d in shape {
        let d = u32::try_from(d)
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::invalid(format!("dimension {d} out of range")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

/// Bytes taken by a name and shape prefix.
pub fn record_prefix_len(name: &str, ndim: usize) -> usize {
    2 + name.len() + 1 + 4 * ndim
}
