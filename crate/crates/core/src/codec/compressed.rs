//! `SLDQ`: quantized adapter container.
//!
//! ```text
//! magic          "SLDQ"
//! version        u16 = 1
//! ---- checksummed from here ----
//! bits           u8        1..=16
//! flavor         u8        0 = plain, 1 = sine
//! omega          f64
//! gamma_mult     f64
//! count          u32
//! count × {
//!   name_len u16, name, ndim u8, dims u32 × ndim,
//!   levels u32, centers f32 × levels,
//!   indices: Πdims × w bits, LSB-first, w = ceil(log2(max(levels, 2)))
//! }
//! ---- end of checksummed region ----
//! crc32          u32       CRC-32 (reflected, 0xEDB88320) of the region above
//! ```

use super::bitpack::{pack_indices, packed_len, unpack_indices};
use super::io::{put_name, put_shape, record_prefix_len, Reader};
use super::raw::check_unique;
use crate::adapter::Flavor;
use crate::error::{Error, Result};
use crate::quantizer::{Codebook, QuantizedTensor, MAX_BITS, MIN_BITS};

pub const COMPRESSED_MAGIC: [u8; 4] = *b"SLDQ";
pub const COMPRESSED_VERSION: u16 = 1;

/// Magic plus version; not covered by the checksum.
pub const PREAMBLE_LEN: usize = 6;
/// bits, flavor, omega, gamma multiplier, tensor count.
pub const GLOBAL_HEADER_LEN: usize = 1 + 1 + 8 + 8 + 4;
pub const CHECKSUM_LEN: usize = 4;
/// Fixed bytes of every container regardless of content.
pub const CONTAINER_OVERHEAD: usize = PREAMBLE_LEN + GLOBAL_HEADER_LEN + CHECKSUM_LEN;
/// The u32 codebook length field of a record.
pub const CODEBOOK_LEN_BYTES: usize = 4;

/// Bits per packed index for a codebook of `levels` entries.
pub fn index_width(levels: usize) -> u32 {
    let l = levels.max(2);
    usize::BITS - (l - 1).leading_zeros()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: QuantizedTensor,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, tensor: QuantizedTensor) -> Self {
        NamedTensor {
            name: name.into(),
            tensor,
        }
    }
}

/// Quantized tensors plus the adapter metadata needed to rebuild deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedAdapter {
    pub bits: u8,
    pub flavor: Flavor,
    pub omega: f64,
    pub gamma_multiplier: f64,
    pub tensors: Vec<NamedTensor>,
}

impl CompressedAdapter {
    pub fn new(bits: u8, flavor: Flavor, omega: f64, gamma_multiplier: f64, tensors: Vec<NamedTensor>) -> Result<Self> {
        let c = CompressedAdapter {
            bits,
            flavor,
            omega,
            gamma_multiplier,
            tensors,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return Err(Error::invalid(format!("bits {} out of range", self.bits)));
        }
        if !self.omega.is_finite() || !self.gamma_multiplier.is_finite() {
            return Err(Error::invalid("omega and gamma multiplier must be finite"));
        }
        check_unique(self.tensors.iter().map(|t| t.name.as_str()))?;
        if let Some(t) = self.tensors.iter().find(|t| t.tensor.codebook().bits() != self.bits) {
            return Err(Error::invalid(format!(
                "tensor '{}' quantized at {} bits, container is {} bits",
                t.name,
                t.tensor.codebook().bits(),
                self.bits
            )));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&QuantizedTensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.tensor.len()).sum()
    }
}

fn record_len(t: &NamedTensor) -> usize {
    let levels = t.tensor.codebook().len();
    record_prefix_len(&t.name, t.tensor.shape().len())
        + CODEBOOK_LEN_BYTES
        + 4 * levels
        + packed_len(t.tensor.len(), index_width(levels))
}

/// Exact serialized size.
pub fn encoded_len(c: &CompressedAdapter) -> usize {
    CONTAINER_OVERHEAD + c.tensors.iter().map(record_len).sum::<usize>()
}

pub fn write_compressed(c: &CompressedAdapter) -> Result<Vec<u8>> {
    c.validate()?;
    let mut out = Vec::with_capacity(encoded_len(c));
    out.extend_from_slice(&COMPRESSED_MAGIC);
    out.extend_from_slice(&COMPRESSED_VERSION.to_le_bytes());
    out.push(c.bits);
    out.push(c.flavor.code());
    out.extend_from_slice(&c.omega.to_le_bytes());
    out.extend_from_slice(&c.gamma_multiplier.to_le_bytes());
    let count = u32::try_from(c.tensors.len()).map_err(|_| Error::invalid("too many tensors"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in &c.tensors {
        put_name(&mut out, &t.name)?;
        put_shape(&mut out, t.tensor.shape())?;
        let centers = t.tensor.codebook().centers();
        out.extend_from_slice(&(centers.len() as u32).to_le_bytes());
        for v in centers {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&pack_indices(t.tensor.indices(), index_width(centers.len()))?);
    }
    let crc = crc32fast::hash(&out[PREAMBLE_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    debug_assert_eq!(out.len(), encoded_len(c));
    Ok(out)
}

pub fn read_compressed(bytes: &[u8]) -> Result<CompressedAdapter> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes(4, "magic")?;
    if magic != COMPRESSED_MAGIC {
        return Err(Error::corrupt("magic", format!("expected SLDQ, found {magic:02x?}")));
    }
    let version = r.u16("version")?;
    if version != COMPRESSED_VERSION {
        return Err(Error::corrupt("version", format!("unsupported version {version}")));
    }
    if bytes.len() < CONTAINER_OVERHEAD {
        return Err(Error::corrupt(
            "header",
            format!("file too short ({} bytes)", bytes.len()),
        ));
    }
    let body_end = bytes.len() - CHECKSUM_LEN;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let actual = crc32fast::hash(&bytes[PREAMBLE_LEN..body_end]);
    if stored != actual {
        return Err(Error::corrupt(
            "checksum",
            format!("stored {stored:08x}, computed {actual:08x}"),
        ));
    }

    let mut r = Reader::new(&bytes[..body_end]);
    r.bytes(PREAMBLE_LEN, "preamble")?;
    let bits = r.u8("bits")?;
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::corrupt(
            "bits",
            format!("{bits} outside [{MIN_BITS}, {MAX_BITS}]"),
        ));
    }
    let flavor_code = r.u8("flavor")?;
    let flavor = Flavor::from_code(flavor_code)
        .ok_or_else(|| Error::corrupt("flavor", format!("unknown flavor code {flavor_code}")))?;
    let omega = r.f64("omega")?;
    let gamma_multiplier = r.f64("gamma multiplier")?;
    let count = r.u32("tensor count")? as usize;

    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let field = format!("tensor {i}");
        let name = r.name(&field)?;
        let shape = r.shape(&field)?;
        let n: usize = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::corrupt(&field, "shape overflows"))?;
        let levels = r.u32(&field)? as usize;
        if levels == 0 || levels > 1usize << bits {
            return Err(Error::corrupt(
                &field,
                format!("codebook length {levels} invalid for {bits} bits"),
            ));
        }
        let mut centers = Vec::with_capacity(levels);
        for _ in 0..levels {
            centers.push(r.f32(&field)?);
        }
        let codebook = Codebook::new(centers, bits).map_err(|e| Error::corrupt(&field, e.to_string()))?;
        let width = index_width(levels);
        let packed = r.bytes(packed_len(n, width), &field)?;
        let indices = unpack_indices(packed, width, n)?;
        let tensor = QuantizedTensor::new(shape, codebook, indices).map_err(|e| match e {
            Error::CorruptData { message, .. } => Error::corrupt(&field, message),
            other => Error::corrupt(&field, other.to_string()),
        })?;
        tensors.push(NamedTensor { name, tensor });
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt(
            "trailer",
            format!("{} unexpected bytes at offset {}", r.remaining(), r.position()),
        ));
    }
    CompressedAdapter::new(bits, flavor, omega, gamma_multiplier, tensors)
        .map_err(|e| Error::corrupt("metadata", e.to_string()))
}
