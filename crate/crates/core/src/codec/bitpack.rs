//! Fixed-width LSB-first index packing.
//!
//! Index `i` occupies bits `[i·w, (i+1)·w)` counting from bit 0 of byte 0.
//! The final byte is zero-padded in its high bits.

use crate::error::{Error, Result};

pub const MAX_WIDTH: u32 = 16;

/// Bytes needed for `count` indices of `width` bits.
pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}

fn check_width(width: u32) -> Result<()> {
    if !(1..=MAX_WIDTH).contains(&width) {
        return Err(Error::invalid(format!(
            "index width must be in [1, {MAX_WIDTH}], got {width}"
        )));
    }
    Ok(())
}

pub fn pack_indices(indices: &[u16], width: u32) -> Result<Vec<u8>> {
    check_width(width)?;
    let limit = 1u32 << width;
    let mut out = Vec::with_capacity(packed_len(indices.len(), width));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for (pos, &idx) in indices.iter().enumerate() {
        if u32::from(idx) >= limit {
            return Err(Error::invalid(format!(
                "index {idx} at position {pos} does not fit in {width} bits"
            )));
        }
        acc |= u64::from(idx) << filled;
        filled += width;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(out)
}

pub fn unpack_indices(bytes: &[u8], width: u32, count: usize) -> Result<Vec<u16>> {
    check_width(width)?;
    let need = packed_len(count, width);
    if bytes.len() < need {
        return Err(Error::corrupt(
            "index stream",
            format!("{count} indices of {width} bits need {need} bytes, got {}", bytes.len()),
        ));
    }
    let mask = (1u64 << width) - 1;
    let mut out = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut src = bytes.iter();
    for _ in 0..count {
        while filled < width {
            // Length was checked above.
            acc |= u64::from(*src.next().expect("checked length")) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u16);
        acc >>= width;
        filled -= width;
    }
    Ok(out)
}
