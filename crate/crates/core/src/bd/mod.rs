//! Bjøntegaard-Delta comparison of rate-quality curves.
//!
//! Rates are always handled as `log10(rate)`. BD-quality interpolates quality
//! over log-rate; BD-rate interpolates log-rate over quality and maps the mean
//! difference back to a percentage.

mod akima;
mod cubic;

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use akima::{akima_interpolate, PiecewiseCubic};
pub use cubic::{cubic_fit_interpolate, CubicPolynomial};

use crate::error::{Error, Result};

/// A function of one variable with an analytic integral.
pub trait Interpolant {
    fn eval(&self, x: f64) -> f64;
    /// `∫_lo^hi f(x) dx`; negative when `hi < lo`.
    fn integrate(&self, lo: f64, hi: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolator {
    #[default]
    Akima,
    CubicFit,
}

impl fmt::Display for Interpolator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolator::Akima => "akima",
            Interpolator::CubicFit => "cubic-fit",
        })
    }
}

impl FromStr for Interpolator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "akima" => Ok(Interpolator::Akima),
            "cubic" | "cubic-fit" | "cubicfit" => Ok(Interpolator::CubicFit),
            other => Err(Error::invalid(format!("unknown interpolator '{other}'"))),
        }
    }
}

enum Fitted {
    Akima(PiecewiseCubic),
    Cubic(CubicPolynomial),
}

impl Interpolant for Fitted {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Fitted::Akima(f) => f.eval(x),
            Fitted::Cubic(f) => f.eval(x),
        }
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Fitted::Akima(f) => f.integrate(lo, hi),
            Fitted::Cubic(f) => f.integrate(lo, hi),
        }
    }
}

fn fit(method: Interpolator, xs: &[f64], ys: &[f64]) -> Result<Fitted> {
    match method {
        Interpolator::Akima => akima_interpolate(xs, ys).map(Fitted::Akima),
        Interpolator::CubicFit => cubic_fit_interpolate(xs, ys).map(Fitted::Cubic),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub rate: f64,
    pub quality: f64,
}

/// Operating points sorted by strictly increasing rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDCurve {
    label: String,
    points: Vec<RDPoint>,
}

pub const MIN_CURVE_POINTS: usize = 4;

impl RDCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<RDPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < MIN_CURVE_POINTS {
            return Err(Error::invalid(format!(
                "curve '{label}' has {} points, need at least {MIN_CURVE_POINTS}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.rate.is_finite() && p.rate > 0.0) {
                return Err(Error::invalid(format!(
                    "curve '{label}': rate {} is not positive",
                    p.rate
                )));
            }
            if !p.quality.is_finite() {
                return Err(Error::invalid(format!("curve '{label}': non-finite quality")));
            }
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        if let Some(w) = points.windows(2).find(|w| w[0].rate == w[1].rate) {
            return Err(Error::invalid(format!("curve '{label}': duplicate rate {}", w[0].rate)));
        }
        Ok(RDCurve { label, points })
    }

    /// Curve from parallel rate and quality slices.
    pub fn from_pairs(label: impl Into<String>, rates: &[f64], qualities: &[f64]) -> Result<Self> {
        if rates.len() != qualities.len() {
            return Err(Error::invalid("rate and quality lists differ in length"));
        }
        let points = rates
            .iter()
            .zip(qualities)
            .map(|(&rate, &quality)| RDPoint { rate, quality })
            .collect();
        RDCurve::new(label, points)
    }

    /// Reads `rate,quality` rows. A header row is optional.
    pub fn from_csv(label: impl Into<String>, reader: impl Read) -> Result<Self> {
        let label = label.into();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(format!("curve '{label}': {e}")))?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!(
                    "curve '{label}' line {}: expected 2 columns (rate,quality), got {}",
                    i + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(rate), Ok(quality)) => points.push(RDPoint { rate, quality }),
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::invalid(format!(
                        "curve '{label}' line {}: cannot parse '{}', '{}'",
                        i + 1,
                        &rec[0],
                        &rec[1]
                    )))
                }
            }
        }
        RDCurve::new(label, points)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate.log10()).collect()
    }

    fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.quality).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BDResult {
    /// Percent; negative means the test curve needs less rate.
    pub bd_rate: f64,
    /// Quality units; positive means the test curve is better.
    pub bd_quality: f64,
    /// Overlap of the two rate ranges (in rate units, not log).
    pub rate_overlap: (f64, f64),
    /// Overlap of the two quality ranges.
    pub quality_overlap: (f64, f64),
    pub interpolator: Interpolator,
}

fn overlap(a: &[f64], b: &[f64], what: &str) -> Result<(f64, f64)> {
    let lo = a[0].max(b[0]);
    let hi = a[a.len() - 1].min(b[b.len() - 1]);
    if lo >= hi {
        return Err(Error::domain(format!("{what} ranges do not overlap")));
    }
    Ok((lo, hi))
}

/// Mean quality gain of `test` over `anchor` across their common log-rate range.
pub fn bd_quality(anchor: &RDCurve, test: &RDCurve, method: Interpolator) -> Result<f64> {
    bd_quality_with_overlap(anchor, test, method).map(|(v, _)| v)
}

fn bd_quality_with_overlap(anchor: &RDCurve, test: &RDCurve, method: Interpolator) -> Result<(f64, (f64, f64))> {
    let (la, lt) = (anchor.log_rates(), test.log_rates());
    let (lo, hi) = overlap(&la, &lt, "rate")?;
    let fa = fit(method, &la, &anchor.qualities())?;
    let ft = fit(method, &lt, &test.qualities())?;
    let diff = ft.integrate(lo, hi) - fa.integrate(lo, hi);
    Ok((diff / (hi - lo), (10f64.powf(lo), 10f64.powf(hi))))
}

/// Log-rate as a function of quality, with knots sorted by quality.
fn inverted(curve: &RDCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut q = curve.qualities();
    let mut lr = curve.log_rates();
    let increasing = q.windows(2).all(|w| w[0] < w[1]);
    let decreasing = q.windows(2).all(|w| w[0] > w[1]);
    if decreasing {
        q.reverse();
        lr.reverse();
    } else if !increasing {
        return Err(Error::domain(format!(
            "curve '{}' is not strictly monotone in quality, so rate cannot be expressed as a function of quality",
            curve.label
        )));
    }
    Ok((q, lr))
}

/// Mean rate difference of `test` relative to `anchor` at equal quality, in percent.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve, method: Interpolator) -> Result<f64> {
    bd_rate_with_overlap(anchor, test, method).map(|(v, _)| v)
}

fn bd_rate_with_overlap(anchor: &RDCurve, test: &RDCurve, method: Interpolator) -> Result<(f64, (f64, f64))> {
    let (qa, ra) = inverted(anchor)?;
    let (qt, rt) = inverted(test)?;
    let (lo, hi) = overlap(&qa, &qt, "quality")?;
    let ga = fit(method, &qa, &ra)?;
    let gt = fit(method, &qt, &rt)?;
    let avg = (gt.integrate(lo, hi) - ga.integrate(lo, hi)) / (hi - lo);
    Ok(((10f64.powf(avg) - 1.0) * 100.0, (lo, hi)))
}

/// Both BD numbers plus their integration intervals.
pub fn compare(anchor: &RDCurve, test: &RDCurve, method: Interpolator) -> Result<BDResult> {
    let (bd_quality, rate_overlap) = bd_quality_with_overlap(anchor, test, method)?;
    let (bd_rate, quality_overlap) = bd_rate_with_overlap(anchor, test, method)?;
    Ok(BDResult {
        bd_rate,
        bd_quality,
        rate_overlap,
        quality_overlap,
        interpolator: method,
    })
}
