//! Dense row-major matrices and the spectral quantities built on them.
//!
//! Only the largest singular value is needed for stable rank, so it is found
//! by power iteration on the Gram matrix of the smaller side rather than by a
//! full decomposition. The smallest singular value (used only as a theorem
//! precondition flag) goes through `nalgebra`'s SVD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Relative change in the Rayleigh quotient below which power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-10;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_MAX_ITERS: usize = 10_000;

const START_VECTOR_SEED: u64 = 0x05EE_D0F5_161A;

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix, checking the length and that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from nested rows. Every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Matrix::new(n, n, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Elementwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        self.map(|v| c * v)
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    match m.data.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::invalid(format!(
            "non-finite entry at ({}, {})",
            pos / m.cols,
            pos % m.cols
        ))),
        None => Ok(()),
    }
}

/// Frobenius norm, `sqrt(sum of squared entries)`.
pub fn frobenius_norm(m: &Matrix) -> Result<f64> {
    ensure_finite(m)?;
    Ok(m.sum_of_squares().sqrt())
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::invalid(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (n, p) = (a.rows, b.cols);
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let row_out = &mut out[i * p..(i + 1) * p];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let row_b = &b.data[k * p..(k + 1) * p];
            for (o, bv) in row_out.iter_mut().zip(row_b) {
                *o += aik * bv;
            }
        }
    }
    Matrix::new(n, p, out)
}

/// Gram matrix of the smaller side: `MᵀM` when tall, `MMᵀ` when wide.
fn small_gram(m: &Matrix) -> Vec<f64> {
    let (r, c) = m.shape();
    if r >= c {
        let mut g = vec![0.0; c * c];
        for row in m.data.chunks_exact(c) {
            for i in 0..c {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..c {
                    g[i * c + j] += ri * row[j];
                }
            }
        }
        symmetrize(&mut g, c);
        g
    } else {
        let mut g = vec![0.0; r * r];
        for i in 0..r {
            let ri = &m.data[i * c..(i + 1) * c];
            for j in i..r {
                let rj = &m.data[j * c..(j + 1) * c];
                g[i * r + j] = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            }
        }
        symmetrize(&mut g, r);
        g
    }
}

fn symmetrize(g: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..i {
            g[i * d + j] = g[j * d + i];
        }
    }
}

fn sym_matvec(g: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = g[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// Converges on the eigenvalue, not the eigenvector, so repeated top singular
/// values are fine. The start vector comes from a fixed seed.
pub fn sigma_max(m: &Matrix) -> Result<f64> {
    ensure_finite(m)?;
    if m.is_zero() {
        return Ok(0.0);
    }
    let d = m.rows.min(m.cols);
    let g = small_gram(m);

    let mut rng = ChaCha8Rng::seed_from_u64(START_VECTOR_SEED);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) + 1.5).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut w = vec![0.0; d];
    sym_matvec(&g, d, &v, &mut w);
    if norm(&w) == 0.0 {
        // Start vector landed in the null space; restart on the heaviest column.
        let best = (0..d)
            .max_by(|&a, &b| g[a * d + a].total_cmp(&g[b * d + b]))
            .unwrap_or(0);
        v.iter_mut().for_each(|x| *x = 0.0);
        v[best] = 1.0;
        sym_matvec(&g, d, &v, &mut w);
    }

    let mut lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    for _ in 0..POWER_ITERATION_MAX_ITERS {
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        sym_matvec(&g, d, &v, &mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if (next - lambda).abs() <= POWER_ITERATION_TOL * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
    }
    Err(Error::numeric(
        format!("power iteration did not converge in {POWER_ITERATION_MAX_ITERS} iterations"),
        Some(lambda.max(0.0).sqrt()),
    ))
}

/// Smallest singular value (of the `min(rows, cols)` singular values).
pub fn sigma_min(m: &Matrix) -> Result<f64> {
    ensure_finite(m)?;
    let nm = nalgebra::DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    let sv = nm.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Matrix of independent `N(0, std²)` entries drawn from `rng`.
pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Result<Matrix> {
    let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(format!("bad standard deviation {std}: {e}")))?;
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

/// Stable rank `‖M‖_F² / σ_max(M)²`.
///
/// The result is clamped into `[1, min(rows, cols)]`, which bounds it
/// mathematically; the clamp only absorbs last-bit rounding.
pub fn stable_rank(m: &Matrix) -> Result<f64> {
    let smax = sigma_max(m)?;
    if smax == 0.0 {
        return Err(Error::domain(
            "stable rank is undefined for the all-zero matrix (sigma_max = 0)",
        ));
    }
    let sr = m.sum_of_squares() / (smax * smax);
    Ok(sr.clamp(1.0, m.rows.min(m.cols) as f64))
}

#[cfg(test)]
#[path = "../tests/common/jacobi.rs"]
mod jacobi;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&Matrix::identity(2)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 4)).unwrap(), 0.0);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0]])).unwrap(), 5.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            Matrix::new(1, 1, vec![f64::INFINITY]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn sigma_max_examples() {
        assert!((sigma_max(&Matrix::diag(&[3.0, 1.0]).unwrap()).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(sigma_max(&Matrix::zeros(3, 2)).unwrap(), 0.0);
        assert!((sigma_max(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_max_wide_and_tall_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]);
        let s1 = sigma_max(&a).unwrap();
        let s2 = sigma_max(&a.transpose()).unwrap();
        assert!((s1 - s2).abs() < 1e-10 * s1);
    }

    #[test]
    fn stable_rank_examples() {
        assert!((stable_rank(&Matrix::identity(4)).unwrap() - 4.0).abs() < 1e-12);
        let u = Matrix::new(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
        let v = Matrix::new(1, 4, vec![2.0, 1.0, 0.0, 3.0]).unwrap();
        let outer = matmul(&u, &v).unwrap();
        assert!((stable_rank(&outer).unwrap() - 1.0).abs() < 1e-12);
        assert!((stable_rank(&Matrix::diag(&[2.0, 1.0]).unwrap()).unwrap() - 1.25).abs() < 1e-9);
    }

    #[test]
    fn stable_rank_of_zero_is_domain_error() {
        assert!(matches!(stable_rank(&Matrix::zeros(2, 2)), Err(Error::Domain(_))));
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        assert!(matmul(&Matrix::zeros(2, 2), &a).unwrap().is_zero());
        assert_eq!(
            matmul(&m(&[&[1.0, 2.0]]), &m(&[&[3.0], &[4.0]])).unwrap(),
            m(&[&[11.0]])
        );
        assert!(matches!(matmul(&a, &Matrix::zeros(3, 1)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sigma_min_of_diag() {
        let d = Matrix::diag(&[5.0, 0.25, 2.0]).unwrap();
        assert!((sigma_min(&d).unwrap() - 0.25).abs() < 1e-12);
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..=16, 1usize..=16).prop_flat_map(|(r, c)| {
            prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn sigma_max_matches_jacobi(a in arb_matrix()) {
            let sv = jacobi::singular_values(a.rows(), a.cols(), a.data());
            let top = sv[0];
            let got = sigma_max(&a).unwrap();
            prop_assert!((got - top).abs() <= 1e-6 * top.max(1e-300), "{got} vs {top}");
        }

        #[test]
        fn frobenius_matches_singular_values(a in arb_matrix()) {
            let sv = jacobi::singular_values(a.rows(), a.cols(), a.data());
            let f2 = frobenius_norm(&a).unwrap().powi(2);
            let s2: f64 = sv.iter().map(|s| s * s).sum();
            prop_assert!((f2 - s2).abs() <= 1e-8 * f2.max(1e-300));
        }

        #[test]
        fn stable_rank_bounds_and_scale_invariance(a in arb_matrix(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            prop_assume!(!a.is_zero());
            let sr = stable_rank(&a).unwrap();
            prop_assert!(sr >= 1.0 && sr <= a.rows().min(a.cols()) as f64);
            let sr_scaled = stable_rank(&a.scale(c).unwrap()).unwrap();
            prop_assert!((sr - sr_scaled).abs() <= 1e-7 * sr);
        }
    }
}
