//! Optimal scalar quantization by exact 1-D k-means.
//!
//! Optimal 1-D clusters are contiguous runs of the sorted data, so the
//! clustering is a shortest-path over split points. Duplicates are folded
//! into weighted points first, which keeps equal values in one cluster and
//! makes the resulting centers strictly increasing. Each DP layer is filled
//! with the monotone divide-and-conquer recurrence, giving `O(k·d·log d)`
//! for `d` distinct values.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MIN_BITS: u8 = 1;
pub const MAX_BITS: u8 = 16;

/// Result of [`kmeans_1d`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster means, strictly ascending.
    pub centers: Vec<f64>,
    /// For each input value (in input order), the index of its nearest center.
    pub assignments: Vec<usize>,
    /// Sum of squared deviations from assigned centers.
    pub cost: f64,
}

/// Sorted, strictly increasing set of reconstruction levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centers: Vec<f32>,
    bits: u8,
}

impl Codebook {
    pub fn new(centers: Vec<f32>, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        if centers.is_empty() {
            return Err(Error::invalid("codebook must have at least one center"));
        }
        if centers.len() > 1usize << bits {
            return Err(Error::invalid(format!(
                "{} centers do not fit in {bits} bits",
                centers.len()
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("codebook centers must be finite"));
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("codebook centers must be strictly increasing"));
        }
        Ok(Codebook { centers, bits })
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the nearest center, ties going to the lower one.
    pub fn nearest(&self, x: f64) -> usize {
        nearest_index(&self.centers, x, |c| *c as f64)
    }
}

/// A tensor stored as codebook indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    shape: Vec<usize>,
    codebook: Codebook,
    indices: Vec<u16>,
}

impl QuantizedTensor {
    pub fn new(shape: Vec<usize>, codebook: Codebook, indices: Vec<u16>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!(
                "shape {shape:?} must be non-empty and positive"
            )));
        }
        let count: usize = shape.iter().product();
        if indices.len() != count {
            return Err(Error::invalid(format!(
                "shape {shape:?} holds {count} elements but {} indices given",
                indices.len()
            )));
        }
        check_indices(&indices, codebook.len())?;
        Ok(QuantizedTensor {
            shape,
            codebook,
            indices,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Looked-up values in storage order.
    pub fn values(&self) -> Result<Vec<f32>> {
        check_indices(&self.indices, self.codebook.len())?;
        let c = self.codebook.centers();
        Ok(self.indices.iter().map(|&i| c[i as usize]).collect())
    }
}

fn check_indices(indices: &[u16], len: usize) -> Result<()> {
    if let Some(pos) = indices.iter().position(|&i| i as usize >= len) {
        return Err(Error::corrupt(
            "indices",
            format!(
                "index {} at position {pos} outside codebook of length {len}",
                indices[pos]
            ),
        ));
    }
    Ok(())
}

fn check_bits(bits: u8) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::invalid(format!(
            "bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"
        )));
    }
    Ok(())
}

fn nearest_index<T>(sorted: &[T], x: f64, val: impl Fn(&T) -> f64) -> usize {
    // First center >= x; compare with its lower neighbour.
    let hi = sorted.partition_point(|c| val(c) < x);
    if hi == 0 {
        return 0;
    }
    if hi == sorted.len() {
        return hi - 1;
    }
    let lo = hi - 1;
    if x - val(&sorted[lo]) <= val(&sorted[hi]) - x {
        lo
    } else {
        hi
    }
}

/// Prefix sums over weighted points, shifted by a reference value so the
/// `S2 - S1²/W` cancellation stays well conditioned.
struct Prefix {
    w: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(xs: &[f64], ws: &[f64]) -> Self {
        let shift = xs[xs.len() / 2];
        let n = xs.len();
        let (mut w, mut s1, mut s2) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
        for i in 0..n {
            let y = xs[i] - shift;
            w[i + 1] = w[i] + ws[i];
            s1[i + 1] = s1[i] + ws[i] * y;
            s2[i + 1] = s2[i] + ws[i] * y * y;
        }
        Prefix { w, s1, s2 }
    }

    /// Within-segment sum of squared deviations for points `[from, to)`.
    #[inline]
    fn cost(&self, from: usize, to: usize) -> f64 {
        let w = self.w[to] - self.w[from];
        let s1 = self.s1[to] - self.s1[from];
        let s2 = self.s2[to] - self.s2[from];
        (s2 - s1 * s1 / w).max(0.0)
    }
}

/// Fills `cur[i]` for `i in lo..=hi` knowing the optimal split lies in `opt_lo..=opt_hi`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    prefix: &Prefix,
    prev: &[f64],
    prev_split: &[u32],
    cur: &mut [f64],
    split: &mut [u32],
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    // With one group fewer, the last group of an optimal split can only start
    // earlier, so the previous layer's split is a second lower bound.
    let first = opt_lo.max(prev_split[mid] as usize);
    let mut best = f64::INFINITY;
    let mut best_j = first;
    let last = opt_hi.min(mid - 1);
    for (j, &p) in prev.iter().enumerate().take(last + 1).skip(first) {
        let c = p + prefix.cost(j, mid);
        if c < best {
            best = c;
            best_j = j;
        }
    }
    cur[mid] = best;
    split[mid] = best_j as u32;
    if mid > lo {
        fill_layer(prefix, prev, prev_split, cur, split, lo, mid - 1, opt_lo, best_j);
    }
    fill_layer(prefix, prev, prev_split, cur, split, mid + 1, hi, best_j, opt_hi);
}

/// Splits `d` weighted sorted points into `k` contiguous groups minimising SSE.
/// Returns the exclusive end index of each group.
fn optimal_segments(xs: &[f64], ws: &[f64], k: usize) -> Vec<usize> {
    let d = xs.len();
    debug_assert!(k >= 1 && k <= d);
    let prefix = Prefix::new(xs, ws);

    let mut prev: Vec<f64> = (0..=d).map(|i| if i == 0 { 0.0 } else { prefix.cost(0, i) }).collect();
    // splits[c][i]: start of the last group when the first i points form c+1 groups.
    let mut splits: Vec<Vec<u32>> = Vec::with_capacity(k);
    splits.push(vec![0; d + 1]);
    let mut cur = vec![f64::INFINITY; d + 1];
    for c in 1..k {
        let mut split = vec![0u32; d + 1];
        cur.iter_mut().for_each(|v| *v = f64::INFINITY);
        // With c+1 groups the prefix length is at least c+1; later layers still
        // need room for k-1-c more groups.
        let lo = c + 1;
        let hi = d - (k - 1 - c);
        fill_layer(&prefix, &prev, &splits[c - 1], &mut cur, &mut split, lo, hi, c, hi - 1);
        splits.push(split);
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut ends = vec![0usize; k];
    let mut end = d;
    for c in (0..k).rev() {
        ends[c] = end;
        end = splits[c][end] as usize;
    }
    ends
}

/// Globally optimal k-means clustering of scalar values.
///
/// When the input has fewer than `k` distinct values, one center per distinct
/// value is returned. Assignments go to the nearest center, ties to the lower.
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<Clustering> {
    if values.is_empty() {
        return Err(Error::invalid("k-means needs at least one value"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("k-means input must be finite"));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for v in sorted {
        match xs.last() {
            Some(&last) if last == v => *ws.last_mut().unwrap() += 1.0,
            _ => {
                xs.push(v);
                ws.push(1.0);
            }
        }
    }

    let centers: Vec<f64> = if k >= xs.len() {
        xs
    } else {
        let ends = optimal_segments(&xs, &ws, k);
        let mut start = 0;
        ends.iter()
            .map(|&end| {
                let (mut sw, mut sx) = (0.0, 0.0);
                for i in start..end {
                    sw += ws[i];
                    sx += ws[i] * xs[i];
                }
                // Clamp guards against a mean rounding outside its own segment.
                let mean = (sx / sw).clamp(xs[start], xs[end - 1]);
                start = end;
                mean
            })
            .collect()
    };

    let assignments: Vec<usize> = values.iter().map(|&v| nearest_index(&centers, v, |c| *c)).collect();
    let cost = values
        .iter()
        .zip(&assignments)
        .map(|(v, &a)| (v - centers[a]).powi(2))
        .sum();
    Ok(Clustering {
        centers,
        assignments,
        cost,
    })
}

/// Quantizes a flat value list with `2^bits` levels.
pub fn quantize_values(values: &[f64], shape: Vec<usize>, bits: u8) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    let clustering = kmeans_1d(values, 1usize << bits)?;

    let mut centers: Vec<f32> = Vec::with_capacity(clustering.centers.len());
    for &c in &clustering.centers {
        let c32 = c as f32;
        if !c32.is_finite() {
            return Err(Error::invalid(format!("value {c} outside f32 range")));
        }
        // Distinct f64 means can collapse onto one f32.
        if centers.last() != Some(&c32) {
            centers.push(c32);
        }
    }
    let codebook = Codebook::new(centers, bits)?;
    let indices = values.iter().map(|&v| codebook.nearest(v) as u16).collect();
    QuantizedTensor::new(shape, codebook, indices)
}

/// Quantizes one matrix with its own codebook of `2^bits` levels.
pub fn quantize_matrix(m: &Matrix, bits: u8) -> Result<QuantizedTensor> {
    quantize_values(m.data(), vec![m.rows(), m.cols()], bits)
}

/// Codebook lookup, reshaped to a matrix. One-dimensional shapes become a
/// single row; higher ranks fold trailing dimensions into columns.
pub fn dequantize(q: &QuantizedTensor) -> Result<Matrix> {
    let values = q.values()?;
    let rows = if q.shape.len() == 1 { 1 } else { q.shape[0] };
    let cols = q.len() / rows;
    Matrix::new(rows, cols, values.into_iter().map(f64::from).collect())
}

/// Quantization residual `Q(m) - m`.
pub fn quantization_error(m: &Matrix, q: &QuantizedTensor) -> Result<Matrix> {
    let qm = dequantize(q)?;
    if qm.shape() != m.shape() {
        return Err(Error::invalid(format!(
            "quantized shape {:?} does not match matrix {}x{}",
            q.shape(),
            m.rows(),
            m.cols()
        )));
    }
    qm.sub(m)
}

#[cfg(test)]
#[path = "../tests/common/partitions.rs"]
mod partitions;
