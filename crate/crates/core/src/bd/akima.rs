use super::Interpolant;
use crate::error::{Error, Result};

/// Piecewise cubic in local coordinates: on `[x_i, x_{i+1}]`,
/// `y = c0 + c1·t + c2·t² + c3·t³` with `t = x - x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCubic {
    xs: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
}

impl PiecewiseCubic {
    /// Cubic Hermite pieces from knot values and knot slopes.
    pub fn hermite(xs: &[f64], ys: &[f64], slopes: &[f64]) -> Self {
        let coeffs = (0..xs.len() - 1)
            .map(|i| {
                let h = xs[i + 1] - xs[i];
                let m = (ys[i + 1] - ys[i]) / h;
                let (t0, t1) = (slopes[i], slopes[i + 1]);
                [ys[i], t0, (3.0 * m - 2.0 * t0 - t1) / h, (t0 + t1 - 2.0 * m) / (h * h)]
            })
            .collect();
        PiecewiseCubic {
            xs: xs.to_vec(),
            coeffs,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn pieces(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    fn piece_for(&self, x: f64) -> usize {
        let last = self.coeffs.len() - 1;
        self.xs.partition_point(|k| *k <= x).saturating_sub(1).min(last)
    }

    /// Antiderivative of piece `i` at local offset `t`.
    fn piece_integral(&self, i: usize, t: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coeffs[i];
        t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
    }
}

impl Interpolant for PiecewiseCubic {
    fn eval(&self, x: f64) -> f64 {
        let i = self.piece_for(x);
        let t = x - self.xs[i];
        let [c0, c1, c2, c3] = self.coeffs[i];
        c0 + t * (c1 + t * (c2 + t * c3))
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return -self.integrate(hi, lo);
        }
        let last = self.coeffs.len() - 1;
        let mut total = 0.0;
        for i in 0..=last {
            // End pieces extend outward so the integral is defined everywhere.
            let left = if i == 0 { f64::NEG_INFINITY } else { self.xs[i] };
            let right = if i == last { f64::INFINITY } else { self.xs[i + 1] };
            let a = lo.max(left);
            let b = hi.min(right);
            if a < b {
                total += self.piece_integral(i, b - self.xs[i]) - self.piece_integral(i, a - self.xs[i]);
            }
        }
        total
    }
}

fn check_knots(xs: &[f64], ys: &[f64], min_points: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "{} x values but {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < min_points {
        return Err(Error::invalid(format!(
            "need at least {min_points} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("interpolation data must be finite"));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("x values must be strictly increasing (no duplicates)"));
    }
    Ok(())
}

pub(crate) fn check_fit_data(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if xs.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("fit data must be finite"));
    }
    Ok(())
}

/// Akima spline through `(xs, ys)`.
///
/// Segment slopes are extended by two virtual segments on each side
/// (`m₋₁ = 2m₀ − m₁`, and so on), which is Akima's quadratic end extension.
/// Knot slopes are the usual `|Δm|`-weighted blend of the two adjacent
/// segment slopes; where both weights vanish (relative to the largest weight
/// sum) the two slopes are averaged.
pub fn akima_interpolate(xs: &[f64], ys: &[f64]) -> Result<PiecewiseCubic> {
    check_knots(xs, ys, 4)?;
    let n = xs.len();
    // m[j + 2] is the slope of segment j; two virtual slopes on each side.
    let mut m = vec![0.0; n + 3];
    for j in 0..n - 1 {
        m[j + 2] = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
    }
    m[1] = 2.0 * m[2] - m[3];
    m[0] = 2.0 * m[1] - m[2];
    m[n + 1] = 2.0 * m[n] - m[n - 1];
    m[n + 2] = 2.0 * m[n + 1] - m[n];

    let dm: Vec<f64> = m.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // Weights for knot i: f1 = |m[i+3] - m[i+2]|, f2 = |m[i+1] - m[i]|.
    let f1: Vec<f64> = (0..n).map(|i| dm[i + 2]).collect();
    let f2: Vec<f64> = (0..n).map(|i| dm[i]).collect();
    let f12: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
    let scale = f12.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let slopes: Vec<f64> = (0..n)
        .map(|i| {
            if f12[i] > 1e-9 * scale {
                (f1[i] * m[i + 1] + f2[i] * m[i + 2]) / f12[i]
            } else {
                0.5 * (m[i + 1] + m[i + 2])
            }
        })
        .collect();
    Ok(PiecewiseCubic::hermite(xs, ys, &slopes))
}
