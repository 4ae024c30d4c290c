//! `ADLT`: uncompressed f32 tensors.
//!
//! ```text
//! magic    "ADLT"
//! version  u16 = 1
//! count    u32
//! count × { name_len u16, name, ndim u8, dims u32 × ndim, values f32 × Πdims }
//! ```

use std::collections::HashSet;

use super::io::{put_name, put_shape, Reader};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const RAW_MAGIC: [u8; 4] = *b"ADLT";
pub const RAW_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl RawTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let count: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("tensor '{name}' has empty shape {shape:?}")));
        }
        if count != values.len() {
            return Err(Error::invalid(format!(
                "tensor '{name}' shape {shape:?} needs {count} values, got {}",
                values.len()
            )));
        }
        Ok(RawTensor { name, shape, values })
    }

    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Result<Self> {
        RawTensor::new(
            name,
            vec![m.rows(), m.cols()],
            m.data().iter().map(|v| *v as f32).collect(),
        )
    }

    /// Two-dimensional view; 1-D tensors become a single row.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let rows = if self.shape.len() == 1 { 1 } else { self.shape[0] };
        let cols = self.values.len() / rows;
        Matrix::new(rows, cols, self.values.iter().map(|v| f64::from(*v)).collect())
            .map_err(|e| Error::invalid(format!("tensor '{}': {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub tensors: Vec<RawTensor>,
}

impl TensorFile {
    pub fn new(tensors: Vec<RawTensor>) -> Result<Self> {
        check_unique(tensors.iter().map(|t| t.name.as_str()))?;
        Ok(TensorFile { tensors })
    }

    pub fn get(&self, name: &str) -> Option<&RawTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub(crate) fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::invalid(format!("duplicate tensor name '{n}'")));
        }
    }
    Ok(())
}

pub fn write_tensor_file(file: &TensorFile) -> Result<Vec<u8>> {
    check_unique(file.tensors.iter().map(|t| t.name.as_str()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    let count = u32::try_from(file.tensors.len()).map_err(|_| Error::invalid("too many tensors"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in &file.tensors {
        put_name(&mut out, &t.name)?;
        put_shape(&mut out, &t.shape)?;
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_tensor_file(bytes: &[u8]) -> Result<TensorFile> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes(4, "magic")?;
    if magic != RAW_MAGIC {
        return Err(Error::corrupt("magic", format!("expected ADLT, found {magic:02x?}")));
    }
    let version = r.u16("version")?;
    if version != RAW_VERSION {
        return Err(Error::corrupt("version", format!("unsupported version {version}")));
    }
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
        let raw = r.bytes(
            n.checked_mul(4)
                .ok_or_else(|| Error::corrupt(&field, "shape overflows"))?,
            &field,
        )?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(RawTensor { name, shape, values });
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt(
            "trailer",
            format!("{} unexpected bytes after last tensor", r.remaining()),
        ));
    }
    check_unique(tensors.iter().map(|t| t.name.as_str())).map_err(|e| Error::corrupt("names", e.to_string()))?;
    Ok(TensorFile { tensors })
}
