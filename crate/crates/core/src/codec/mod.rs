//! On-disk formats. All multi-byte scalars are little-endian; names are a
//! u16 byte length followed by UTF-8 bytes with no terminator.

mod bitpack;
mod compressed;
mod io;
mod raw;

use std::path::Path;

pub use bitpack::{pack_indices, packed_len, unpack_indices};
pub use compressed::{
    encoded_len, index_width, read_compressed, write_compressed, CompressedAdapter, NamedTensor, CHECKSUM_LEN,
    CODEBOOK_LEN_BYTES, COMPRESSED_MAGIC, COMPRESSED_VERSION, CONTAINER_OVERHEAD, GLOBAL_HEADER_LEN, PREAMBLE_LEN,
};
pub use io::record_prefix_len;
pub use raw::{read_tensor_file, write_tensor_file, RawTensor, TensorFile, RAW_MAGIC, RAW_VERSION};

use crate::error::Result;
use crate::quantizer::QuantizedTensor;

/// Order-0 Shannon entropy of the index histogram, in bits per element.
/// Zero for an empty or constant stream.
pub fn index_entropy(q: &QuantizedTensor) -> f64 {
    let n = q.len();
    if n == 0 {
        return 0.0;
    }
    let mut hist = vec![0usize; q.codebook().len()];
    for &i in q.indices() {
        hist[i as usize] += 1;
    }
    let n = n as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    read_tensor_file(&std::fs::read(path)?)
}

pub fn save_tensor_file(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    Ok(std::fs::write(path, write_tensor_file(file)?)?)
}

pub fn load_compressed(path: impl AsRef<Path>) -> Result<CompressedAdapter> {
    read_compressed(&std::fs::read(path)?)
}

pub fn save_compressed(path: impl AsRef<Path>, c: &CompressedAdapter) -> Result<()> {
    Ok(std::fs::write(path, write_compressed(c)?)?)
}
