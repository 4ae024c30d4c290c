//! Fitting adapter factors to a target weight delta by gradient descent.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{activate, default_gamma, Flavor};
use crate::error::{Error, Result};
use crate::report::{csv_err, format_sig};
use crate::tensor::{gaussian, matmul, stable_rank, Matrix};

/// Step halvings tried before a step is declared stalled.
pub const MAX_HALVINGS: u32 = 20;

/// `‖ΔW − T‖_F²` and its gradients with respect to `A` and `B`.
pub fn loss_and_gradients(
    a: &Matrix,
    b: &Matrix,
    target: &Matrix,
    flavor: Flavor,
    omega: f64,
    gamma: f64,
) -> Result<(f64, Matrix, Matrix)> {
    let p = matmul(a, b)?;
    if p.shape() != target.shape() {
        return Err(Error::invalid(format!(
            "A·B is {:?} but the target is {:?}",
            p.shape(),
            target.shape()
        )));
    }
    let delta = activate(&p, flavor, omega, gamma)?;
    let resid = delta.sub(target)?;
    let loss = resid.sum_of_squares();
    let g = match flavor {
        Flavor::Plain => resid.scale(2.0)?,
        Flavor::Sine => {
            let c = 2.0 * omega / gamma;
            resid.zip_with(&p, |r, p| c * r * (omega * p).cos())?
        }
    };
    let da = matmul(&g, &b.transpose())?;
    let db = matmul(&a.transpose(), &g)?;
    Ok((loss, da, db))
}

fn loss_only(a: &Matrix, b: &Matrix, target: &Matrix, flavor: Flavor, omega: f64, gamma: f64) -> Result<f64> {
    let delta = activate(&matmul(a, b)?, flavor, omega, gamma)?;
    Ok(delta.sub(target)?.sum_of_squares())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub target: Matrix,
    pub rank: usize,
    pub flavor: Flavor,
    pub omega: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Stop once the loss falls to `tolerance · ‖T‖_F²`. Zero runs the full budget.
    pub tolerance: f64,
}

impl FitConfig {
    /// Defaults: ω = 200, γ = √n, learning rate 1e-2, 1000 iterations, seed 0.
    pub fn new(target: Matrix, rank: usize, flavor: Flavor) -> Self {
        let gamma = default_gamma(target.cols(), 1.0);
        FitConfig {
            target,
            rank,
            flavor,
            omega: crate::adapter::DEFAULT_OMEGA,
            gamma,
            learning_rate: 1e-2,
            iterations: 1000,
            seed: 0,
            tolerance: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (m, n) = self.target.shape();
        if self.rank == 0 || self.rank > m.min(n) {
            return Err(Error::invalid(format!(
                "rank {} must be in 1..={}",
                self.rank,
                m.min(n)
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.flavor == Flavor::Sine && !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!("omega must be positive, got {}", self.omega)));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::invalid("tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_loss: f64,
    /// Loss before the first step and after every accepted step.
    pub trajectory: Vec<f64>,
    /// `None` when the fitted delta is exactly zero.
    pub stable_rank: Option<f64>,
    /// Accepted steps.
    pub iterations: usize,
    /// True when a step failed to decrease the loss after every halving.
    pub stalled: bool,
    pub a: Matrix,
    pub b: Matrix,
    pub elapsed: Duration,
}

fn check_loss(loss: f64, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(
            format!("loss diverged to {loss} at iteration {iteration}"),
            Some(loss),
        ))
    }
}

/// Gradient descent from `A ~ N(0, 1/k)`, `B = 0`.
///
/// Every step starts at the configured learning rate and is halved until the
/// loss does not increase. Deterministic for a given config.
pub fn fit(config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let start = Instant::now();
    let (m, n) = config.target.shape();
    let k = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut a = gaussian(m, k, (1.0 / k as f64).sqrt(), &mut rng)?;
    let mut b = Matrix::zeros(k, n);
    let (flavor, omega, gamma, target) = (config.flavor, config.omega, config.gamma, &config.target);
    let goal = if config.tolerance > 0.0 {
        config.tolerance * target.sum_of_squares()
    } else {
        0.0
    };

    let mut trajectory = Vec::with_capacity(config.iterations + 1);
    let mut stalled = false;
    let mut iterations = 0;
    let (mut loss, mut da, mut db) = loss_and_gradients(&a, &b, target, flavor, omega, gamma)?;
    check_loss(loss, 0)?;
    trajectory.push(loss);

    while iterations < config.iterations && loss > goal {
        let mut lr = config.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let step = |x: &Matrix, g: &Matrix| {
                x.zip_with(g, |x, g| x - lr * g).map_err(|_| {
                    Error::numeric(
                        format!("divergence at iteration {iterations}: non-finite parameters"),
                        Some(loss),
                    )
                })
            };
            let (na, nb) = (step(&a, &da)?, step(&b, &db)?);
            let next = loss_only(&na, &nb, target, flavor, omega, gamma)?;
            check_loss(next, iterations)?;
            if next <= loss {
                accepted = Some((na, nb));
                break;
            }
            lr *= 0.5;
        }
        let Some((na, nb)) = accepted else {
            stalled = true;
            break;
        };
        a = na;
        b = nb;
        (loss, da, db) = loss_and_gradients(&a, &b, target, flavor, omega, gamma)?;
        iterations += 1;
        trajectory.push(loss);
    }

    let delta = activate(&matmul(&a, &b)?, flavor, omega, gamma)?;
    let stable_rank = if delta.is_zero() {
        None
    } else {
        Some(stable_rank(&delta)?)
    };
    Ok(FitReport {
        final_loss: loss,
        trajectory,
        stable_rank,
        iterations,
        stalled,
        a,
        b,
        elapsed: start.elapsed(),
    })
}

/// Random `m×n` matrix with orthonormal columns (or rows when `m < n`), so
/// every singular value is 1.
pub fn random_orthogonal(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tall_m, tall_n) = (m.max(n), m.min(n));
    let g = gaussian(tall_m, tall_n, 1.0, &mut rng)?;
    let qr = nalgebra::DMatrix::from_row_slice(tall_m, tall_n, g.data()).qr();
    let q = qr.q();
    let r = qr.r();
    // Fix column signs so the factorization is unique.
    let tall = Matrix::from_fn(tall_m, tall_n, |i, j| q[(i, j)] * r[(j, j)].signum())?;
    Ok(if m >= n { tall } else { tall.transpose() })
}

/// Settings shared by every fit in an expressivity comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivitySettings {
    pub omega: f64,
    /// `None` uses `√n`.
    pub gamma: Option<f64>,
    pub plain_learning_rate: f64,
    pub sine_learning_rate: f64,
    pub iterations: usize,
}

impl Default for ExpressivitySettings {
    fn default() -> Self {
        ExpressivitySettings {
            omega: crate::adapter::DEFAULT_OMEGA,
            gamma: None,
            plain_learning_rate: 1e-2,
            sine_learning_rate: 1e-4,
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityRow {
    pub rank: usize,
    pub seed: u64,
    pub flavor: Flavor,
    pub final_loss: f64,
    pub stable_rank: Option<f64>,
    pub iters: usize,
}

pub const EXPRESSIVITY_CSV_HEADER: &str = "rank,seed,flavor,final_loss,stable_rank,iters";

/// Fits both flavors at every `(rank, seed)` to the seed's random orthogonal
/// target. Rows are ordered by rank, seed, then Plain before Sine.
pub fn expressivity_report(
    m: usize,
    n: usize,
    ranks: &[usize],
    seeds: &[u64],
    settings: &ExpressivitySettings,
) -> Result<Vec<ExpressivityRow>> {
    let jobs: Vec<(usize, u64, Flavor)> = ranks
        .iter()
        .flat_map(|&k| {
            seeds
                .iter()
                .flat_map(move |&s| [(k, s, Flavor::Plain), (k, s, Flavor::Sine)])
        })
        .collect();
    let gamma = settings.gamma.unwrap_or_else(|| default_gamma(n, 1.0));
    jobs.par_iter()
        .map(|&(rank, seed, flavor)| {
            let target = random_orthogonal(m, n, seed)?;
            let config = FitConfig {
                target,
                rank,
                flavor,
                omega: settings.omega,
                gamma,
                learning_rate: match flavor {
                    Flavor::Plain => settings.plain_learning_rate,
                    Flavor::Sine => settings.sine_learning_rate,
                },
                iterations: settings.iterations,
                seed,
                tolerance: 0.0,
            };
            let r = fit(&config)?;
            Ok(ExpressivityRow {
                rank,
                seed,
                flavor,
                final_loss: r.final_loss,
                stable_rank: r.stable_rank,
                iters: r.iterations,
            })
        })
        .collect()
}

pub fn write_expressivity_csv(rows: &[ExpressivityRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = EXPRESSIVITY_CSV_HEADER.split(',').collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.seed.to_string(),
            r.flavor.to_string(),
            format_sig(r.final_loss),
            r.stable_rank.map(format_sig).unwrap_or_default(),
            r.iters.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::frobenius_norm;

    fn rand(m: usize, n: usize, std: f64, seed: u64) -> Matrix {
        gaussian(m, n, std, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn check_fd(a: &Matrix, b: &Matrix, t: &Matrix, flavor: Flavor, omega: f64, gamma: f64) {
        let (_, da, db) = loss_and_gradients(a, b, t, flavor, omega, gamma).unwrap();
        let h = 1e-5;
        let perturb = |x: &Matrix, idx: usize, d: f64| {
            let mut v = x.data().to_vec();
            v[idx] += d;
            Matrix::new(x.rows(), x.cols(), v).unwrap()
        };
        let compare = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs();
            if analytic.abs() < 1e-8 {
                assert!(err < 1e-6, "{analytic} vs {numeric}");
            } else {
                assert!(err <= 1e-4 * analytic.abs(), "{analytic} vs {numeric}");
            }
        };
        for i in 0..a.data().len() {
            let lp = loss_only(&perturb(a, i, h), b, t, flavor, omega, gamma).unwrap();
            let lm = loss_only(&perturb(a, i, -h), b, t, flavor, omega, gamma).unwrap();
            compare(da.data()[i], (lp - lm) / (2.0 * h));
        }
        for i in 0..b.data().len() {
            let lp = loss_only(a, &perturb(b, i, h), t, flavor, omega, gamma).unwrap();
            let lm = loss_only(a, &perturb(b, i, -h), t, flavor, omega, gamma).unwrap();
            compare(db.data()[i], (lp - lm) / (2.0 * h));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let a = rand(8, 2, 0.7, seed);
            let b = rand(2, 8, 0.7, seed + 100);
            let t = rand(8, 8, 0.3, seed + 200);
            check_fd(&a, &b, &t, Flavor::Plain, 1.0, 1.0);
            check_fd(&a, &b, &t, Flavor::Sine, 3.0, 2.0);
        }
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let a = rand(6, 2, 1.0, 1);
        let b = rand(2, 5, 1.0, 2);
        let t = activate(&matmul(&a, &b).unwrap(), Flavor::Sine, 5.0, 2.0).unwrap();
        let (loss, da, db) = loss_and_gradients(&a, &b, &t, Flavor::Sine, 5.0, 2.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(da.is_zero() && db.is_zero());
    }

    #[test]
    fn plain_with_identity_b() {
        let a = rand(4, 4, 1.0, 3);
        let t = rand(4, 4, 1.0, 4);
        let (_, da, _) = loss_and_gradients(&a, &Matrix::identity(4), &t, Flavor::Plain, 1.0, 1.0).unwrap();
        let expected = a.sub(&t).unwrap().scale(2.0).unwrap();
        assert!(frobenius_norm(&da.sub(&expected).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let r = loss_and_gradients(
            &rand(4, 2, 1.0, 0),
            &rand(2, 3, 1.0, 0),
            &rand(4, 4, 1.0, 0),
            Flavor::Plain,
            1.0,
            1.0,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_target_is_immediate() {
        let mut c = FitConfig::new(Matrix::zeros(8, 8), 2, Flavor::Sine);
        c.iterations = 50;
        let r = fit(&c).unwrap();
        assert_eq!(r.final_loss, 0.0);
        assert_eq!(r.stable_rank, None);
    }

    #[test]
    fn planted_target_is_recovered() {
        let (omega, gamma) = (0.5, 2.0);
        let a = rand(12, 2, 1.0, 10);
        let b = rand(2, 10, 1.0, 11);
        let t = activate(&matmul(&a, &b).unwrap(), Flavor::Sine, omega, gamma).unwrap();
        let mut c = FitConfig::new(t.clone(), 2, Flavor::Sine);
        c.omega = omega;
        c.gamma = gamma;
        c.learning_rate = 0.5;
        c.iterations = 5000;
        c.tolerance = 1e-7;
        let r = fit(&c).unwrap();
        assert!(r.final_loss < 1e-6 * t.sum_of_squares(), "{}", r.final_loss);
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn deterministic() {
        let mut c = FitConfig::new(random_orthogonal(16, 16, 3).unwrap(), 2, Flavor::Sine);
        c.iterations = 30;
        c.learning_rate = 1e-3;
        let (r1, r2) = (fit(&c).unwrap(), fit(&c).unwrap());
        assert_eq!(r1.trajectory, r2.trajectory);
        assert_eq!(r1.a, r2.a);
    }

    #[test]
    fn divergence_is_reported() {
        let mut c = FitConfig::new(
            Matrix::from_fn(4, 4, |i, j| 1e300 * (i + j + 1) as f64).unwrap(),
            2,
            Flavor::Plain,
        );
        c.learning_rate = 1e300;
        let r = fit(&c);
        assert!(matches!(r, Err(Error::Numeric { .. })), "{r:?}");
    }

    #[test]
    fn orthogonal_targets() {
        for (m, n) in [(8, 8), (10, 6), (6, 10)] {
            let q = random_orthogonal(m, n, 7).unwrap();
            let gram = if m >= n {
                matmul(&q.transpose(), &q)
            } else {
                matmul(&q, &q.transpose())
            }
            .unwrap();
            let eye = Matrix::identity(m.min(n));
            assert!(frobenius_norm(&gram.sub(&eye).unwrap()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn full_rank_fits_reach_near_zero() {
        let settings = ExpressivitySettings {
            omega: 1.0,
            gamma: Some(1.0),
            plain_learning_rate: 0.05,
            sine_learning_rate: 0.05,
            iterations: 3000,
        };
        let rows = expressivity_report(6, 6, &[6], &[1], &settings).unwrap();
        for r in rows {
            assert!(r.final_loss < 1e-3, "{r:?}");
        }
    }
}
