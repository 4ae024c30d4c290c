//! Delta compression for sine-activated low-rank adapters.
//!
//! Adapter factors are quantized with an exact 1-D k-means codebook, stored
//! in a checksummed bit-packed container, and rebuilt as `sin(ω·A·B)/γ`.
//! Supporting pieces: stable-rank analysis of quantized products,
//! Bjøntegaard-Delta comparison of rate-quality curves, and a small
//! gradient-descent harness for fitting adapters to synthetic targets.

pub mod adapter;
pub mod bd;
pub mod cli;
pub mod codec;
pub mod error;
pub mod fit;
pub mod quantizer;
pub mod report;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
