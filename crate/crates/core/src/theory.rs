//! Stable-rank behaviour under quantization: the two-sided bound relating
//! `SR(Q(A))` to `SR(A)`, and seeded sweeps over rank, frequency and bit width.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{activate, Flavor};
use crate::error::{Error, Result};
use crate::quantizer::{dequantize, quantize_matrix, MAX_BITS, MIN_BITS};
use crate::report::{csv_err, format_sig};
use crate::tensor::{frobenius_norm, gaussian, matmul, sigma_max, sigma_min, stable_rank, Matrix};

/// Outcome of evaluating the quantized stable-rank bound on one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub sr_a: f64,
    pub sr_qa: f64,
    /// `‖Q(A) − A‖_F`.
    pub eps_frob: f64,
    pub sigma_max_a: f64,
    pub sigma_min_a: f64,
    pub sigma_max_eps: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub preconditions_met: bool,
    /// `lower_bound ≤ √sr_qa ≤ upper_bound`, evaluated whether or not the
    /// preconditions hold.
    pub holds: bool,
}

/// Hypothesis flags for the bound. "Much greater than" is taken as
/// `σ_max(ε) ≥ 1` and `σ_max(A) ≥ 2·σ_max(ε)`.
pub fn preconditions(sigma_min_a: f64, sigma_max_a: f64, sigma_max_eps: f64) -> bool {
    sigma_min_a <= 1.0 && sigma_max_eps >= 1.0 && sigma_max_a >= 2.0 * sigma_max_eps
}

/// Quantizes `a` at `bits` and evaluates
/// `½(√SR(A) − ‖ε‖_F/σ_max(A)) ≤ √SR(Q(A)) ≤ 2(√SR(A) + ‖ε‖_F/σ_max(A))`.
pub fn check_theorem(a: &Matrix, bits: u8) -> Result<TheoremCheck> {
    if a.is_zero() {
        return Err(Error::domain("matrix is all zero"));
    }
    let qa = dequantize(&quantize_matrix(a, bits)?)?;
    let eps = qa.sub(a)?;

    let sr_a = stable_rank(a)?;
    let sr_qa = stable_rank(&qa)?;
    let eps_frob = frobenius_norm(&eps)?;
    let sigma_max_a = sigma_max(a)?;
    let sigma_min_a = sigma_min(a)?;
    let sigma_max_eps = sigma_max(&eps)?;

    let ratio = eps_frob / sigma_max_a;
    let lower_bound = 0.5 * (sr_a.sqrt() - ratio);
    let upper_bound = 2.0 * (sr_a.sqrt() + ratio);
    let root = sr_qa.sqrt();
    Ok(TheoremCheck {
        sr_a,
        sr_qa,
        eps_frob,
        sigma_max_a,
        sigma_min_a,
        sigma_max_eps,
        lower_bound,
        upper_bound,
        preconditions_met: preconditions(sigma_min_a, sigma_max_a, sigma_max_eps),
        holds: lower_bound <= root && root <= upper_bound,
    })
}

/// Gaussian `m×n` matrix rescaled so that `σ_max` equals `target_sigma_max`.
pub fn scaled_gaussian(m: usize, n: usize, target_sigma_max: f64, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian(m, n, 1.0, &mut rng)?;
    let s = sigma_max(&g)?;
    g.scale(target_sigma_max / s)
}

/// Quantization level of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitWidth {
    Bits(u8),
    /// No quantization.
    Full,
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BitWidth::Bits(b) => write!(f, "{b}"),
            BitWidth::Full => f.write_str("full"),
        }
    }
}

impl FromStr for BitWidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(BitWidth::Full);
        }
        let b: u8 = s.parse().map_err(|_| Error::invalid(format!("bad bit width '{s}'")))?;
        if !(MIN_BITS..=MAX_BITS).contains(&b) {
            return Err(Error::invalid(format!(
                "bit width {b} outside [{MIN_BITS}, {MAX_BITS}]"
            )));
        }
        Ok(BitWidth::Bits(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rank: usize,
    pub omega: f64,
    pub bits: BitWidth,
    /// `SR(A·B)`.
    pub sr_plain: f64,
    /// `SR(Q(A)·Q(B))`.
    pub sr_quantized: f64,
    /// `SR(sin(ω·A·B))`.
    pub sr_sine: f64,
    /// `SR(sin(ω·Q(A)·Q(B)))`.
    pub sr_sine_quantized: f64,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "rank,omega,bits,sr_plain,sr_quantized,sr_sine,sr_sine_quantized,seed";

/// Factors for one `(rank, seed)` cell: `A ~ N(0, 1/k)` (m×k), `B ~ N(0, 1/k)` (k×n).
///
/// The stream is keyed by rank so different ranks under one seed are
/// independent draws.
pub fn sweep_factors(m: usize, n: usize, rank: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rank as u64);
    let std = (1.0 / rank as f64).sqrt();
    let a = gaussian(m, rank, std, &mut rng)?;
    let b = gaussian(rank, n, std, &mut rng)?;
    Ok((a, b))
}

fn sine_sr(product: &Matrix, omega: f64) -> Result<f64> {
    // γ only rescales, so it is left at 1.
    stable_rank(&activate(product, Flavor::Sine, omega, 1.0)?)
}

fn sweep_cell(
    m: usize,
    n: usize,
    rank: usize,
    seed: u64,
    omegas: &[f64],
    bit_widths: &[BitWidth],
) -> Result<Vec<SweepPoint>> {
    let (a, b) = sweep_factors(m, n, rank, seed)?;
    let plain = matmul(&a, &b)?;
    let sr_plain = stable_rank(&plain)?;
    let quantized: Vec<Matrix> = bit_widths
        .iter()
        .map(|bw| match bw {
            BitWidth::Full => Ok(plain.clone()),
            BitWidth::Bits(bits) => {
                let qa = dequantize(&quantize_matrix(&a, *bits)?)?;
                let qb = dequantize(&quantize_matrix(&b, *bits)?)?;
                matmul(&qa, &qb)
            }
        })
        .collect::<Result<_>>()?;
    let sr_quantized: Vec<f64> = quantized.iter().map(stable_rank).collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(omegas.len() * bit_widths.len());
    for &omega in omegas {
        let sr_sine = sine_sr(&plain, omega)?;
        for (i, &bits) in bit_widths.iter().enumerate() {
            let sr_sine_quantized = match bits {
                BitWidth::Full => sr_sine,
                BitWidth::Bits(_) => sine_sr(&quantized[i], omega)?,
            };
            out.push(SweepPoint {
                rank,
                omega,
                bits,
                sr_plain,
                sr_quantized: sr_quantized[i],
                sr_sine,
                sr_sine_quantized,
                seed,
            });
        }
    }
    Ok(out)
}

/// Every combination of rank, frequency, bit width and seed.
///
/// Output is ordered by rank, then seed, then ω, then bit width, whatever the
/// thread count. Runs on the current rayon pool.
pub fn sweep_stable_rank(
    m: usize,
    n: usize,
    ranks: &[usize],
    omegas: &[f64],
    bit_widths: &[BitWidth],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    if let Some(k) = ranks.iter().find(|&&k| k == 0 || k > m.min(n)) {
        return Err(Error::invalid(format!("rank {k} must be in 1..={}", m.min(n))));
    }
    if let Some(w) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::invalid(format!("omega must be positive, got {w}")));
    }
    let cells: Vec<(usize, u64)> = ranks.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let results: Vec<Vec<SweepPoint>> = cells
        .par_iter()
        .map(|&(k, s)| sweep_cell(m, n, k, s, omegas, bit_widths))
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

pub fn write_sweep_csv(points: &[SweepPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = SWEEP_CSV_HEADER.split(',').collect();
    w.write_record(&header).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.rank.to_string(),
            format_sig(p.omega),
            p.bits.to_string(),
            format_sig(p.sr_plain),
            format_sig(p.sr_quantized),
            format_sig(p.sr_sine),
            format_sig(p.sr_sine_quantized),
            p.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
