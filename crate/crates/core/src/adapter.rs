//! Low-rank adapters, plain and sine-activated, and their storage cost.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{self, CompressedAdapter, NamedTensor};
use crate::error::{Error, Result};
use crate::quantizer::{dequantize, quantize_matrix, QuantizedTensor};
use crate::tensor::{matmul, Matrix};

/// Frequency used when none is given.
pub const DEFAULT_OMEGA: f64 = 200.0;

/// Bytes per parameter at full (16-bit) precision.
pub const FULL_PRECISION_BYTES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// `ΔW = A·B`
    Plain,
    /// `ΔW = sin(ω·A·B) / γ`
    Sine,
}

impl Flavor {
    pub fn code(self) -> u8 {
        match self {
            Flavor::Plain => 0,
            Flavor::Sine => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Flavor::Plain),
            1 => Some(Flavor::Sine),
            _ => None,
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Plain => "plain",
            Flavor::Sine => "sine",
        })
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "lora" => Ok(Flavor::Plain),
            "sine" => Ok(Flavor::Sine),
            other => Err(Error::invalid(format!("unknown flavor '{other}'"))),
        }
    }
}

/// `multiplier · √n`. The usual choice is multiplier 1; 2 is also common.
pub fn default_gamma(n: usize, multiplier: f64) -> f64 {
    multiplier * (n as f64).sqrt()
}

/// Factors `A` (m×k) and `B` (k×n) of one adapted weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterPair {
    a: Matrix,
    b: Matrix,
    omega: f64,
    gamma: f64,
    flavor: Flavor,
}

impl AdapterPair {
    /// `gamma: None` applies [`default_gamma`] to the output column count `n`.
    pub fn new(a: Matrix, b: Matrix, flavor: Flavor, omega: f64, gamma: Option<f64>) -> Result<Self> {
        check_factor_shapes(a.shape(), b.shape())?;
        let gamma = gamma.unwrap_or_else(|| default_gamma(b.cols(), 1.0));
        check_scalars(flavor, omega, gamma)?;
        Ok(AdapterPair {
            a,
            b,
            omega,
            gamma,
            flavor,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.a.data().len() + self.b.data().len()
    }
}

fn check_factor_shapes((m, k): (usize, usize), (kb, n): (usize, usize)) -> Result<()> {
    if k != kb {
        return Err(Error::invalid(format!(
            "A is {m}x{k} but B is {kb}x{n}; inner dimensions differ"
        )));
    }
    if k > m.min(n) {
        return Err(Error::invalid(format!("bottleneck rank {k} exceeds min({m}, {n})")));
    }
    Ok(())
}

fn check_scalars(flavor: Flavor, omega: f64, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if flavor == Flavor::Sine && !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid(format!("omega must be positive, got {omega}")));
    }
    Ok(())
}

/// Applies the adapter activation to an already formed product `P = A·B`.
pub fn activate(product: &Matrix, flavor: Flavor, omega: f64, gamma: f64) -> Result<Matrix> {
    match flavor {
        Flavor::Plain => Ok(product.clone()),
        Flavor::Sine => product.map(|p| (omega * p).sin() / gamma),
    }
}

/// Weight delta of an adapter pair, `m×n`.
pub fn reconstruct_delta(p: &AdapterPair) -> Result<Matrix> {
    let product = matmul(&p.a, &p.b)?;
    activate(&product, p.flavor, p.omega, p.gamma)
}

/// Weight delta from quantized factors. `gamma: None` uses `√n`.
pub fn reconstruct_quantized_delta(
    qa: &QuantizedTensor,
    qb: &QuantizedTensor,
    omega: f64,
    gamma: Option<f64>,
    flavor: Flavor,
) -> Result<Matrix> {
    let a = dequantize(qa)?;
    let b = dequantize(qb)?;
    if a.cols() != b.rows() {
        return Err(Error::invalid(format!(
            "quantized factors do not compose: {:?} x {:?}",
            qa.shape(),
            qb.shape()
        )));
    }
    let gamma = gamma.unwrap_or_else(|| default_gamma(b.cols(), 1.0));
    check_scalars(flavor, omega, gamma)?;
    activate(&matmul(&a, &b)?, flavor, omega, gamma)
}

/// Named collection of adapter pairs sharing one set of conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    layers: Vec<(String, AdapterPair)>,
    /// Multiplier for the `√n` gamma rule.
    pub gamma_multiplier: f64,
    pub omega: f64,
    pub flavor: Flavor,
}

impl AdapterSet {
    pub fn new(flavor: Flavor, omega: f64, gamma_multiplier: f64) -> Self {
        AdapterSet {
            layers: Vec::new(),
            gamma_multiplier,
            omega,
            flavor,
        }
    }

    /// Adds a layer from raw factors using the set's conventions.
    pub fn push(&mut self, name: impl Into<String>, a: Matrix, b: Matrix) -> Result<()> {
        let name = name.into();
        if self.layers.iter().any(|(n, _)| *n == name) {
            return Err(Error::invalid(format!("duplicate layer name '{name}'")));
        }
        let gamma = default_gamma(b.cols(), self.gamma_multiplier);
        let pair = AdapterPair::new(a, b, self.flavor, self.omega, Some(gamma))?;
        self.layers.push((name, pair));
        Ok(())
    }

    pub fn layers(&self) -> &[(String, AdapterPair)] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|(_, p)| p.parameter_count()).sum()
    }

    /// Quantizes every factor with its own codebook. Factors are stored as
    /// `<layer>.A` and `<layer>.B`.
    pub fn quantize(&self, bits: u8) -> Result<CompressedAdapter> {
        let mut tensors = Vec::with_capacity(self.layers.len() * 2);
        for (name, pair) in &self.layers {
            tensors.push(NamedTensor::new(format!("{name}.A"), quantize_matrix(&pair.a, bits)?));
            tensors.push(NamedTensor::new(format!("{name}.B"), quantize_matrix(&pair.b, bits)?));
        }
        CompressedAdapter::new(bits, self.flavor, self.omega, self.gamma_multiplier, tensors)
    }
}

/// Storage precision used for footprint planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// k-means codebook with `2^bits` levels.
    Bits(u8),
    /// Raw 16-bit floats, no codebook.
    Full,
}

impl Precision {
    pub fn label(&self) -> String {
        match self {
            Precision::Bits(b) => format!("{b}-bit"),
            Precision::Full => "full".to_string(),
        }
    }
}

/// Exact size in bytes of the compressed container for `adapter`.
///
/// Identical to the length of [`codec::write_compressed`]'s output.
pub fn memory_footprint(adapter: &CompressedAdapter) -> usize {
    codec::encoded_len(adapter)
}

/// Predicted size of a container holding tensors of the given names and
/// shapes, assuming every quantized tensor uses a full `2^bits` codebook.
/// `Full` counts two bytes per value and no codebook.
pub fn planned_footprint(tensors: &[(String, Vec<usize>)], precision: Precision) -> usize {
    let records: usize = tensors
        .iter()
        .map(|(name, shape)| {
            let count: usize = shape.iter().product();
            let payload = match precision {
                Precision::Bits(b) => {
                    let levels = 1usize << b;
                    codec::CODEBOOK_LEN_BYTES + levels * 4 + codec::packed_len(count, codec::index_width(levels))
                }
                Precision::Full => count * FULL_PRECISION_BYTES,
            };
            codec::record_prefix_len(name, shape.len()) + payload
        })
        .sum();
    codec::CONTAINER_OVERHEAD + records
}

/// Factor shapes of a rank-`k` adapter on every attention and MLP projection
/// of an 8B-parameter, 32-layer decoder with grouped KV heads
/// (hidden 4096, KV width 1024, MLP width 14336), targeting
/// q, k, v, up and down projections.
pub fn decoder_8b_adapter_shapes(rank: usize) -> Vec<(String, Vec<usize>)> {
    const LAYERS: usize = 32;
    const HIDDEN: usize = 4096;
    const KV: usize = 1024;
    const MLP: usize = 14336;
    let targets = [
        ("q_proj", HIDDEN, HIDDEN),
        ("k_proj", KV, HIDDEN),
        ("v_proj", KV, HIDDEN),
        ("up_proj", MLP, HIDDEN),
        ("down_proj", HIDDEN, MLP),
    ];
    let mut out = Vec::with_capacity(LAYERS * targets.len() * 2);
    for layer in 0..LAYERS {
        for (name, rows, cols) in targets {
            out.push((format!("layers.{layer}.{name}.A"), vec![rows, rank]));
            out.push((format!("layers.{layer}.{name}.B"), vec![rank, cols]));
        }
    }
    out
}
