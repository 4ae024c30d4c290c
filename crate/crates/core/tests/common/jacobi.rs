//! One-sided (Hestenes) Jacobi SVD. Test oracle only: slow, simple, and
//! independent of the power-iteration path used by the library.

#![allow(dead_code)]

/// All `min(rows, cols)` singular values of a row-major matrix, descending.
pub fn singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    // Work on the tall orientation so columns are the short side.
    let (r, c, mut a) = if rows >= cols {
        (rows, cols, data.to_vec())
    } else {
        let mut t = vec![0.0; data.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = data[i * cols + j];
            }
        }
        (cols, rows, t)
    };

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..c {
            for q in (p + 1)..c {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..r {
                    let ap = a[i * c + p];
                    let aq = a[i * c + q];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 {
                    continue;
                }
                let denom = (alpha * beta).sqrt();
                if denom > 0.0 {
                    off = off.max(gamma.abs() / denom);
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..r {
                    let ap = a[i * c + p];
                    let aq = a[i * c + q];
                    a[i * c + p] = cs * ap - sn * aq;
                    a[i * c + q] = sn * ap + cs * aq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    let mut sv: Vec<f64> = (0..c)
        .map(|j| (0..r).map(|i| a[i * c + j].powi(2)).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}
