mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use sinedelta::adapter::{default_gamma, memory_footprint};
use sinedelta::codec::{load_compressed, load_tensor_file, save_tensor_file, RawTensor, TensorFile};
use sinedelta::tensor::{frobenius_norm, gaussian, matmul, Matrix};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sinedelta"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two layers of f32-representable factors, A: 12×3 and B: 3×10.
fn factors() -> Vec<(String, Matrix, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let round = |m: Matrix| m.map(|v| v as f32 as f64).unwrap();
    (0..2)
        .map(|l| {
            let a = round(gaussian(12, 3, 0.5, &mut rng).unwrap());
            let b = round(gaussian(3, 10, 0.5, &mut rng).unwrap());
            (format!("layers.{l}"), a, b)
        })
        .collect()
}

fn write_factors(dir: &Path, extra: Option<RawTensor>) -> PathBuf {
    let mut tensors = Vec::new();
    for (name, a, b) in factors() {
        tensors.push(RawTensor::from_matrix(format!("{name}.A"), &a).unwrap());
        tensors.push(RawTensor::from_matrix(format!("{name}.B"), &b).unwrap());
    }
    tensors.extend(extra);
    let path = dir.join("factors.adlt");
    save_tensor_file(&path, &TensorFile::new(tensors).unwrap()).unwrap();
    path
}

#[test]
fn quantize_at_16_bits_is_lossless_and_sized_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_factors(dir.path(), None);
    let out = dir.path().join("q.sldq");
    let o = run(&[
        "quantize",
        "--input",
        p(&input),
        "--output",
        p(&out),
        "--bits",
        "16",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for t in report["tensors"].as_array().unwrap() {
        assert_eq!(t["mse"].as_f64().unwrap(), 0.0, "{t}");
    }
    let size = std::fs::metadata(&out).unwrap().len();
    assert_eq!(report["total_bytes"].as_u64().unwrap(), size);
    assert_eq!(memory_footprint(&load_compressed(&out).unwrap()) as u64, size);
}

#[test]
fn quantize_text_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_factors(dir.path(), None);
    let out = dir.path().join("q.sldq");
    let o = run(&["quantize", "--input", p(&input), "--output", p(&out), "--bits", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("layers.0.A  shape 12x3  levels 8  mse "), "{text}");
    assert!(text.contains("total bytes "), "{text}");
    assert!(text.contains("entropy headroom"), "{text}");
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "quantize",
        "--input",
        p(&dir.path().join("nope.adlt")),
        "--output",
        p(&dir.path().join("x.sldq")),
        "--bits",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.adlt"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["quantize", "--bits", "4"]).status.code(), Some(2));
    assert_eq!(
        run(&["quantize", "--input", "a", "--output", "b", "--bits", "17"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn plain_round_trip_matches_direct_product() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_factors(dir.path(), None);
    let q = dir.path().join("q.sldq");
    let deltas = dir.path().join("d.adlt");
    assert!(
        run(&["quantize", "--input", p(&input), "--output", p(&q), "--bits", "16"])
            .status
            .success()
    );
    let o = run(&[
        "reconstruct",
        "--input",
        p(&q),
        "--output",
        p(&deltas),
        "--flavor",
        "plain",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let file = load_tensor_file(&deltas).unwrap();
    assert_eq!(file.tensors.len(), 2);
    for (name, a, b) in factors() {
        let direct = matmul(&a, &b).unwrap();
        let got = file.get(&name).unwrap().to_matrix().unwrap();
        let rel = frobenius_norm(&got.sub(&direct).unwrap()).unwrap() / frobenius_norm(&direct).unwrap();
        assert!(rel < 1e-3, "{name}: {rel}");
    }
}

#[test]
fn sine_deltas_are_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_factors(dir.path(), None);
    let q = dir.path().join("q.sldq");
    let deltas = dir.path().join("d.adlt");
    assert!(
        run(&["quantize", "--input", p(&input), "--output", p(&q), "--bits", "4"])
            .status
            .success()
    );
    assert!(run(&["reconstruct", "--input", p(&q), "--output", p(&deltas)])
        .status
        .success());
    let bound = 1.0 / default_gamma(10, 1.0);
    for t in load_tensor_file(&deltas).unwrap().tensors {
        assert!(t.values.iter().all(|v| f64::from(v.abs()) <= bound * (1.0 + 1e-6)));
    }
}

#[test]
fn orphan_factor_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let orphan = RawTensor::new("layer7.A", vec![4, 2], vec![0.5; 8]).unwrap();
    let input = write_factors(dir.path(), Some(orphan));
    let q = dir.path().join("q.sldq");
    assert!(
        run(&["quantize", "--input", p(&input), "--output", p(&q), "--bits", "2"])
            .status
            .success()
    );
    let o = run(&[
        "reconstruct",
        "--input",
        p(&q),
        "--output",
        p(&dir.path().join("d.adlt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("layer7.A"));
}

fn write_curve(dir: &Path, name: &str, rates: &[f64], qualities: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut s = String::from("rate,quality\n");
    for (r, q) in rates.iter().zip(qualities) {
        s.push_str(&format!("{r},{q}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn bd_on_identical_curves_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plain, _, mem) = common::MEASURED_CURVES[0];
    let a = write_curve(dir.path(), "a.csv", &mem, &plain);
    let b = write_curve(dir.path(), "b.csv", &mem, &plain);
    let o = run(&["bd", "--anchor", p(&a), "--test", p(&b), "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bd_rate"].as_f64(), Some(0.0));
    assert_eq!(v["bd_quality"].as_f64(), Some(0.0));
}

#[test]
fn bd_reports_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plain, sine, mem) = common::MEASURED_CURVES[0];
    let a = write_curve(dir.path(), "lora.csv", &mem, &plain);
    let b = write_curve(dir.path(), "sine.csv", &mem, &sine);
    let text = stdout(&run(&["bd", "--anchor", p(&a), "--test", p(&b)]));
    assert!(text.contains("bd-rate -41.5964 %"), "{text}");
    assert!(text.contains("bd-quality 1.29214"), "{text}");
    let csv = stdout(&run(&["bd", "--anchor", p(&a), "--test", p(&b), "--format", "csv"]));
    assert!(csv.starts_with("bd_rate,bd_quality,"), "{csv}");
    let disjoint = write_curve(
        dir.path(),
        "far.csv",
        &[100.0, 200.0, 300.0, 400.0],
        &[1.0, 2.0, 3.0, 4.0],
    );
    assert_eq!(
        run(&["bd", "--anchor", p(&a), "--test", p(&disjoint)]).status.code(),
        Some(3)
    );
}

#[test]
fn verify_theorem_summary() {
    let o = run(&[
        "verify-theorem",
        "--seeds",
        "100",
        "--rows",
        "32",
        "--cols",
        "32",
        "--sigma-max",
        "100",
        "--bits",
        "3",
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("holds: 100/100 (preconditions met: "), "{text}");
}

#[test]
fn sweep_csv_and_determinism() {
    let args = [
        "sweep", "--rows", "16", "--cols", "16", "--ranks", "2,4", "--omegas", "1,100", "--bits", "2,full", "--seeds",
        "3", "--format", "csv",
    ];
    let a = stdout(&run(&args));
    assert_eq!(a, stdout(&run(&args)));
    let mut threaded: Vec<&str> = args.to_vec();
    threaded.extend(["--threads", "3"]);
    assert_eq!(a, stdout(&run(&threaded)));
    let mut lines = a.lines();
    assert_eq!(
        lines.next().unwrap(),
        "rank,omega,bits,sr_plain,sr_quantized,sr_sine,sr_sine_quantized,seed"
    );
    assert_eq!(lines.count(), 2 * 2 * 2 * 3);
}

#[test]
fn fit_reports_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.csv");
    let o = run(&[
        "fit",
        "--rows",
        "12",
        "--cols",
        "12",
        "--ranks",
        "2",
        "--seeds",
        "2",
        "--iterations",
        "50",
        "--output",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "rank,seed,flavor,final_loss,stable_rank,iters");
    assert_eq!(lines.count(), 4);
    assert!(stdout(&o).contains("sine_wins"));
}

#[test]
fn info_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_factors(dir.path(), None);
    let q = dir.path().join("q.sldq");
    assert!(
        run(&["quantize", "--input", p(&input), "--output", p(&q), "--bits", "5"])
            .status
            .success()
    );

    let o = run(&["info", "--input", p(&q)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("checksum ok"));
    assert!(run(&["info", "--input", p(&input)]).status.success());

    let mut bytes = std::fs::read(&q).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let bad = dir.path().join("bad.sldq");
    std::fs::write(&bad, bytes).unwrap();
    let o = run(&["info", "--input", p(&bad)]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(
        run(&["reconstruct", "--input", p(&bad), "--output", p(&dir.path().join("x"))])
            .status
            .code(),
        Some(4)
    );
}
