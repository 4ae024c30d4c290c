#![allow(dead_code)]

pub mod jacobi;
pub mod partitions;

use sinedelta::bd::RDCurve;

/// Commonsense-reasoning averages for ranks 1, 2, 4, 8, 16 and the matching
/// adapter memory in MB: (label, plain, sine, memory).
pub type CurveRow = (&'static str, [f64; 5], [f64; 5], [f64; 5]);

pub const MEASURED_CURVES: [CurveRow; 4] = [
    (
        "2-bit",
        [69.7, 71.0, 74.7, 75.2, 77.3],
        [70.0, 73.7, 75.1, 76.4, 77.9],
        [0.6, 1.1, 2.2, 4.3, 8.6],
    ),
    (
        "3-bit",
        [70.0, 73.1, 75.5, 76.5, 78.4],
        [70.5, 74.4, 75.9, 77.7, 78.6],
        [0.8, 1.5, 3.0, 6.0, 11.9],
    ),
    (
        "5-bit",
        [69.4, 73.1, 75.6, 76.7, 78.6],
        [69.8, 74.4, 76.1, 78.1, 78.8],
        [1.2, 2.3, 4.5, 9.1, 18.1],
    ),
    (
        "16-bit",
        [73.7, 74.8, 76.5, 78.0, 79.0],
        [72.8, 75.1, 78.5, 78.8, 78.9],
        [3.4, 6.8, 13.5, 27.1, 54.0],
    ),
];

/// Published (BD-rate %, BD-quality) of the sine adapter against the plain
/// one at each precision, in [`MEASURED_CURVES`] order.
pub const EXPECTED_BD: [(f64, f64); 4] = [(-41.60, 1.29), (-28.51, 0.88), (-28.04, 0.96), (-30.46, 0.69)];

pub fn measured_curves(i: usize) -> (RDCurve, RDCurve) {
    let (label, plain, sine, mem) = MEASURED_CURVES[i];
    (
        RDCurve::from_pairs(format!("plain {label}"), &mem, &plain).unwrap(),
        RDCurve::from_pairs(format!("sine {label}"), &mem, &sine).unwrap(),
    )
}
