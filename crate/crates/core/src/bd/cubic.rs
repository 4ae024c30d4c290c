use nalgebra::{DMatrix, DVector};

use super::akima::check_fit_data;
use super::Interpolant;
use crate::error::{Error, Result};

/// Least-squares cubic, stored in a centred and scaled variable
/// `u = (x - center) / scale` for conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicPolynomial {
    center: f64,
    scale: f64,
    /// Coefficients of `1, u, u², u³`.
    coeffs: [f64; 4],
}

impl CubicPolynomial {
    /// Coefficients of `1, x, x², x³` in the original variable.
    pub fn coefficients(&self) -> [f64; 4] {
        // Expand Σ a_j ((x - c)/s)^j.
        let (c, s) = (self.center, self.scale);
        let binom = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        let mut out = [0.0; 4];
        for (j, a) in self.coeffs.iter().enumerate() {
            let sj = s.powi(j as i32);
            for (i, o) in out.iter_mut().enumerate().take(j + 1) {
                *o += a * binom[j][i] * (-c).powi((j - i) as i32) / sj;
            }
        }
        out
    }

    fn antiderivative_u(&self, u: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coeffs;
        u * (a0 + u * (a1 / 2.0 + u * (a2 / 3.0 + u * a3 / 4.0)))
    }
}

impl Interpolant for CubicPolynomial {
    fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        let [a0, a1, a2, a3] = self.coeffs;
        a0 + u * (a1 + u * (a2 + u * a3))
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let ul = (lo - self.center) / self.scale;
        let uh = (hi - self.center) / self.scale;
        self.scale * (self.antiderivative_u(uh) - self.antiderivative_u(ul))
    }
}

/// Least-squares cubic through the points; exact when there are four.
pub fn cubic_fit_interpolate(xs: &[f64], ys: &[f64]) -> Result<CubicPolynomial> {
    check_fit_data(xs, ys)?;
    let n = xs.len();
    let center = xs.iter().sum::<f64>() / n as f64;
    let spread = xs.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
    if spread == 0.0 {
        return Err(Error::numeric("cubic fit design matrix is singular: all x equal", None));
    }
    let design = DMatrix::from_fn(n, 4, |i, j| ((xs[i] - center) / spread).powi(j as i32));
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 1e-12 * smax {
        return Err(Error::numeric(
            "cubic fit design matrix is rank deficient (fewer than 4 distinct x)",
            Some(smin),
        ));
    }
    let sol = svd
        .solve(&DVector::from_column_slice(ys), 0.0)
        .map_err(|e| Error::numeric(format!("cubic fit solve failed: {e}"), None))?;
    Ok(CubicPolynomial {
        center,
        scale: spread,
        coeffs: [sol[0], sol[1], sol[2], sol[3]],
    })
}
