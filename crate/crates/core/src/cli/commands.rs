use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{BdArgs, Command, FitArgs, InfoArgs, Output, QuantizeArgs, ReconstructArgs, SweepArgs, VerifyArgs};
use crate::adapter::{default_gamma, memory_footprint, reconstruct_quantized_delta, Flavor};
use crate::bd::{compare, Interpolator, RDCurve};
use crate::codec::{
    self, index_entropy, index_width, CompressedAdapter, NamedTensor, RawTensor, TensorFile, COMPRESSED_MAGIC,
    RAW_MAGIC,
};
use crate::error::{Error, Result};
use crate::fit::{expressivity_report, write_expressivity_csv, ExpressivitySettings};
use crate::quantizer::quantize_values;
use crate::report::{format_sig as sig, round_sig};
use crate::theory::{check_theorem, scaled_gaussian, sweep_stable_rank, write_sweep_csv, BitWidth};

pub(super) fn dispatch(cmd: &Command) -> Result<Output> {
    match cmd {
        Command::Quantize(a) => quantize(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Sweep(a) => sweep(a),
        Command::VerifyTheorem(a) => verify(a),
        Command::Bd(a) => bd(a),
        Command::Fit(a) => fit(a),
        Command::Info(a) => info(a),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn csv_string(header: &str, rows: &[Vec<String>]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn quantize(args: &QuantizeArgs) -> Result<Output> {
    let flavor: Flavor = args.flavor.parse()?;
    let file = codec::read_tensor_file(&read_file(&args.input)?)?;
    if file.tensors.is_empty() {
        return Err(Error::invalid("input holds no tensors"));
    }
    let quantized: Vec<(NamedTensor, f64)> = file
        .tensors
        .par_iter()
        .map(|t| {
            let values: Vec<f64> = t.values.iter().map(|v| f64::from(*v)).collect();
            let q = quantize_values(&values, t.shape.clone(), args.bits)
                .map_err(|e| Error::invalid(format!("tensor '{}': {e}", t.name)))?;
            let recon = q.values()?;
            let mse = values
                .iter()
                .zip(&recon)
                .map(|(v, r)| (f64::from(*r) - v).powi(2))
                .sum::<f64>()
                / values.len() as f64;
            Ok((NamedTensor::new(t.name.clone(), q), mse))
        })
        .collect::<Result<_>>()?;

    let mses: Vec<f64> = quantized.iter().map(|(_, m)| *m).collect();
    let tensors: Vec<NamedTensor> = quantized.into_iter().map(|(t, _)| t).collect();
    let adapter = CompressedAdapter::new(args.bits, flavor, args.omega, args.gamma_multiplier, tensors)?;
    codec::save_compressed(&args.output, &adapter)?;
    let total_bytes = memory_footprint(&adapter);

    let mut text = String::new();
    let mut rows = Vec::new();
    let mut per_tensor = Vec::new();
    let mut headroom_bits = 0.0;
    for (t, mse) in adapter.tensors.iter().zip(&mses) {
        let levels = t.tensor.codebook().len();
        let entropy = index_entropy(&t.tensor);
        let width = index_width(levels) as f64;
        let headroom = width - entropy;
        headroom_bits += headroom * t.tensor.len() as f64;
        let shape = shape_str(t.tensor.shape());
        writeln!(
            text,
            "{}  shape {}  levels {}  mse {}  entropy {} bits  headroom {} bits/value",
            t.name,
            shape,
            levels,
            sig(*mse),
            sig(entropy),
            sig(headroom)
        )
        .unwrap();
        rows.push(vec![
            t.name.clone(),
            shape.clone(),
            levels.to_string(),
            sig(*mse),
            sig(entropy),
            sig(headroom),
        ]);
        per_tensor.push(json!({
            "name": t.name,
            "shape": t.tensor.shape(),
            "levels": levels,
            "mse": round_sig(*mse),
            "entropy_bits": round_sig(entropy),
            "headroom_bits_per_value": round_sig(headroom),
        }));
    }
    let headroom_bytes = headroom_bits / 8.0;
    writeln!(
        text,
        "total bytes {}  entropy headroom {} bytes",
        total_bytes,
        sig(headroom_bytes)
    )
    .unwrap();
    Ok(Output {
        text,
        json: json!({
            "bits": args.bits,
            "tensors": per_tensor,
            "total_bytes": total_bytes,
            "entropy_headroom_bytes": round_sig(headroom_bytes),
        }),
        csv: csv_string("name,shape,levels,mse,entropy,headroom", &rows),
    })
}

/// Groups `<layer>.A` / `<layer>.B` tensors by layer, in first-seen order.
fn pair_layers(c: &CompressedAdapter) -> Result<Vec<(String, &NamedTensor, &NamedTensor)>> {
    let mut layers: BTreeMap<&str, (usize, Option<&NamedTensor>, Option<&NamedTensor>)> = BTreeMap::new();
    for (i, t) in c.tensors.iter().enumerate() {
        let (layer, is_a) = if let Some(l) = t.name.strip_suffix(".A") {
            (l, true)
        } else if let Some(l) = t.name.strip_suffix(".B") {
            (l, false)
        } else {
            return Err(Error::invalid(format!(
                "tensor '{}' is not named <layer>.A or <layer>.B",
                t.name
            )));
        };
        let entry = layers.entry(layer).or_insert((i, None, None));
        if is_a {
            entry.1 = Some(t);
        } else {
            entry.2 = Some(t);
        }
    }
    let mut out: Vec<(usize, String, &NamedTensor, &NamedTensor)> = Vec::new();
    for (layer, (order, a, b)) in layers {
        match (a, b) {
            (Some(a), Some(b)) => out.push((order, layer.to_string(), a, b)),
            (Some(a), None) => return Err(Error::invalid(format!("orphan tensor '{}': no '{layer}.B'", a.name))),
            (None, Some(b)) => return Err(Error::invalid(format!("orphan tensor '{}': no '{layer}.A'", b.name))),
            (None, None) => unreachable!(),
        }
    }
    out.sort_by_key(|(order, ..)| *order);
    Ok(out.into_iter().map(|(_, l, a, b)| (l, a, b)).collect())
}

fn reconstruct(args: &ReconstructArgs) -> Result<Output> {
    let c = codec::read_compressed(&read_file(&args.input)?)?;
    let flavor = match &args.flavor {
        Some(f) => f.parse()?,
        None => c.flavor,
    };
    let omega = args.omega.unwrap_or(c.omega);
    let multiplier = args.gamma_multiplier.unwrap_or(c.gamma_multiplier);
    let layers = pair_layers(&c)?;

    let deltas: Vec<(String, crate::tensor::Matrix, f64)> = layers
        .par_iter()
        .map(|(layer, a, b)| {
            if a.tensor.shape().len() != 2 || b.tensor.shape().len() != 2 {
                return Err(Error::invalid(format!("layer '{layer}': factors must be 2-D")));
            }
            let n = b.tensor.shape()[1];
            let gamma = default_gamma(n, multiplier);
            let d =
                reconstruct_quantized_delta(&a.tensor, &b.tensor, omega, Some(gamma), flavor).map_err(|e| match e {
                    Error::InvalidInput(m) => Error::invalid(format!("layer '{layer}': {m}")),
                    other => other,
                })?;
            Ok((layer.clone(), d, gamma))
        })
        .collect::<Result<_>>()?;

    let mut text = String::new();
    let mut rows = Vec::new();
    let mut json_layers = Vec::new();
    let mut raw = Vec::with_capacity(deltas.len());
    for (layer, d, gamma) in &deltas {
        let max_abs = d.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let shape = format!("{}x{}", d.rows(), d.cols());
        writeln!(
            text,
            "{layer}  shape {shape}  gamma {}  max|dW| {}",
            sig(*gamma),
            sig(max_abs)
        )
        .unwrap();
        rows.push(vec![layer.clone(), shape, sig(*gamma), sig(max_abs)]);
        json_layers.push(json!({
            "name": layer,
            "shape": [d.rows(), d.cols()],
            "gamma": round_sig(*gamma),
            "max_abs": round_sig(max_abs),
        }));
        raw.push(RawTensor::from_matrix(layer.clone(), d)?);
    }
    codec::save_tensor_file(&args.output, &TensorFile::new(raw)?)?;
    writeln!(
        text,
        "wrote {} layer deltas ({flavor}, omega {})",
        deltas.len(),
        sig(omega)
    )
    .unwrap();
    Ok(Output {
        text,
        json: json!({
            "flavor": flavor,
            "omega": round_sig(omega),
            "gamma_multiplier": round_sig(multiplier),
            "layers": json_layers,
        }),
        csv: csv_string("layer,shape,gamma,max_abs", &rows),
    })
}

fn sweep(args: &SweepArgs) -> Result<Output> {
    let bits: Vec<BitWidth> = args.bits.iter().map(|b| b.parse()).collect::<Result<_>>()?;
    let seeds = args.seeds.list();
    let points = sweep_stable_rank(args.rows, args.cols, &args.ranks, &args.omegas, &bits, &seeds)?;

    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv)?;
    if let Some(path) = &args.output {
        write_sweep_csv(&points, BufWriter::new(File::create(path)?))?;
    }

    // Means over seeds for each (rank, omega, bits), in first-seen order.
    type Group = ((usize, u64, BitWidth), [f64; 4], usize);
    let mut groups: Vec<Group> = Vec::new();
    for p in &points {
        let key = (p.rank, p.omega.to_bits(), p.bits);
        let vals = [p.sr_plain, p.sr_quantized, p.sr_sine, p.sr_sine_quantized];
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                for (acc, v) in g.1.iter_mut().zip(vals) {
                    *acc += v;
                }
                g.2 += 1;
            }
            None => groups.push((key, vals, 1)),
        }
    }
    let mut text = format!(
        "stable rank, mean over {} seeds ({}x{})\nrank  omega  bits  plain  quantized  sine  sine_quantized\n",
        seeds.len(),
        args.rows,
        args.cols
    );
    for ((rank, omega, bits), sums, count) in &groups {
        let mean = |i: usize| sig(sums[i] / *count as f64);
        writeln!(
            text,
            "{rank}  {}  {bits}  {}  {}  {}  {}",
            sig(f64::from_bits(*omega)),
            mean(0),
            mean(1),
            mean(2),
            mean(3)
        )
        .unwrap();
    }
    let json_points: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "rank": p.rank,
                "omega": round_sig(p.omega),
                "bits": p.bits.to_string(),
                "sr_plain": round_sig(p.sr_plain),
                "sr_quantized": round_sig(p.sr_quantized),
                "sr_sine": round_sig(p.sr_sine),
                "sr_sine_quantized": round_sig(p.sr_sine_quantized),
                "seed": p.seed,
            })
        })
        .collect();
    Ok(Output {
        text,
        json: json!({ "points": json_points }),
        csv: String::from_utf8(csv).expect("csv output is utf-8"),
    })
}

fn verify(args: &VerifyArgs) -> Result<Output> {
    let seeds = args.seeds.list();
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    if !(args.sigma_max.is_finite() && args.sigma_max > 0.0) {
        return Err(Error::invalid("sigma-max must be positive"));
    }
    let checks = seeds
        .par_iter()
        .map(|&s| {
            let a = scaled_gaussian(args.rows, args.cols, args.sigma_max, s)?;
            check_theorem(&a, args.bits).map(|c| (s, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let holds = checks.iter().filter(|(_, c)| c.holds).count();
    let met = checks.iter().filter(|(_, c)| c.preconditions_met).count();
    let holds_when_met = checks.iter().filter(|(_, c)| c.preconditions_met && c.holds).count();
    let n = checks.len();

    let mut text = format!("holds: {holds}/{n} (preconditions met: {met})\n");
    writeln!(text, "holds where preconditions met: {holds_when_met}/{met}").unwrap();
    let header = "seed,sr_a,sr_qa,eps_frob,sigma_max_a,sigma_min_a,sigma_max_eps,lower_bound,upper_bound,preconditions_met,holds";
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|(s, c)| {
            vec![
                s.to_string(),
                sig(c.sr_a),
                sig(c.sr_qa),
                sig(c.eps_frob),
                sig(c.sigma_max_a),
                sig(c.sigma_min_a),
                sig(c.sigma_max_eps),
                sig(c.lower_bound),
                sig(c.upper_bound),
                c.preconditions_met.to_string(),
                c.holds.to_string(),
            ]
        })
        .collect();
    let json_checks: Vec<Value> = checks
        .iter()
        .map(|(s, c)| {
            json!({
                "seed": s,
                "sr_a": round_sig(c.sr_a),
                "sr_qa": round_sig(c.sr_qa),
                "eps_frob": round_sig(c.eps_frob),
                "sigma_max_a": round_sig(c.sigma_max_a),
                "sigma_min_a": round_sig(c.sigma_min_a),
                "sigma_max_eps": round_sig(c.sigma_max_eps),
                "lower_bound": round_sig(c.lower_bound),
                "upper_bound": round_sig(c.upper_bound),
                "preconditions_met": c.preconditions_met,
                "holds": c.holds,
            })
        })
        .collect();
    Ok(Output {
        text,
        json: json!({
            "trials": n,
            "holds": holds,
            "preconditions_met": met,
            "holds_when_preconditions_met": holds_when_met,
            "checks": json_checks,
        }),
        csv: csv_string(header, &rows),
    })
}

fn load_curve(path: &Path) -> Result<RDCurve> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    RDCurve::from_csv(label, read_file(path)?.as_slice())
}

fn bd(args: &BdArgs) -> Result<Output> {
    let method: Interpolator = args.interpolator.parse()?;
    let anchor = load_curve(&args.anchor)?;
    let test = load_curve(&args.test)?;
    let r = compare(&anchor, &test, method)?;
    let text = format!(
        "anchor {}  test {}  interpolator {}\nbd-rate {} %\nbd-quality {}\nrate overlap [{}, {}]\nquality overlap [{}, {}]\n",
        anchor.label(),
        test.label(),
        method,
        sig(r.bd_rate),
        sig(r.bd_quality),
        sig(r.rate_overlap.0),
        sig(r.rate_overlap.1),
        sig(r.quality_overlap.0),
        sig(r.quality_overlap.1),
    );
    let csv = csv_string(
        "bd_rate,bd_quality,rate_lo,rate_hi,quality_lo,quality_hi,interpolator",
        &[vec![
            sig(r.bd_rate),
            sig(r.bd_quality),
            sig(r.rate_overlap.0),
            sig(r.rate_overlap.1),
            sig(r.quality_overlap.0),
            sig(r.quality_overlap.1),
            method.to_string(),
        ]],
    );
    Ok(Output {
        text,
        json: json!({
            "anchor": anchor.label(),
            "test": test.label(),
            "interpolator": method,
            "bd_rate": round_sig(r.bd_rate),
            "bd_quality": round_sig(r.bd_quality),
            "rate_overlap": [round_sig(r.rate_overlap.0), round_sig(r.rate_overlap.1)],
            "quality_overlap": [round_sig(r.quality_overlap.0), round_sig(r.quality_overlap.1)],
        }),
        csv,
    })
}

fn fit(args: &FitArgs) -> Result<Output> {
    let settings = ExpressivitySettings {
        omega: args.omega,
        gamma: args.gamma,
        plain_learning_rate: args.plain_lr,
        sine_learning_rate: args.sine_lr,
        iterations: args.iterations,
    };
    let seeds = args.seeds.list();
    let rows = expressivity_report(args.rows, args.cols, &args.ranks, &seeds, &settings)?;
    let mut csv = Vec::new();
    write_expressivity_csv(&rows, &mut csv)?;
    if let Some(path) = &args.output {
        write_expressivity_csv(&rows, BufWriter::new(File::create(path)?))?;
    }

    let mut text = format!(
        "{}x{} orthogonal targets, {} seeds, {} iterations\nrank  plain_loss  sine_loss  plain_sr  sine_sr  sine_wins\n",
        args.rows,
        args.cols,
        seeds.len(),
        args.iterations
    );
    let mut summary = Vec::new();
    for &rank in &args.ranks {
        let of = |f: Flavor| rows.iter().filter(move |r| r.rank == rank && r.flavor == f);
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let plain_loss = mean(of(Flavor::Plain).map(|r| r.final_loss).collect());
        let sine_loss = mean(of(Flavor::Sine).map(|r| r.final_loss).collect());
        let plain_sr = mean(of(Flavor::Plain).filter_map(|r| r.stable_rank).collect());
        let sine_sr = mean(of(Flavor::Sine).filter_map(|r| r.stable_rank).collect());
        let wins = of(Flavor::Plain)
            .zip(of(Flavor::Sine))
            .filter(|(p, s)| s.final_loss < p.final_loss)
            .count();
        writeln!(
            text,
            "{rank}  {}  {}  {}  {}  {wins}/{}",
            sig(plain_loss),
            sig(sine_loss),
            sig(plain_sr),
            sig(sine_sr),
            seeds.len()
        )
        .unwrap();
        summary.push(json!({
            "rank": rank,
            "mean_plain_loss": round_sig(plain_loss),
            "mean_sine_loss": round_sig(sine_loss),
            "mean_plain_stable_rank": round_sig(plain_sr),
            "mean_sine_stable_rank": round_sig(sine_sr),
            "sine_wins": wins,
            "seeds": seeds.len(),
        }));
    }
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "rank": r.rank,
                "seed": r.seed,
                "flavor": r.flavor,
                "final_loss": round_sig(r.final_loss),
                "stable_rank": r.stable_rank.map(round_sig),
                "iters": r.iters,
            })
        })
        .collect();
    Ok(Output {
        text,
        json: json!({ "summary": summary, "fits": json_rows }),
        csv: String::from_utf8(csv).expect("csv output is utf-8"),
    })
}

fn info(args: &InfoArgs) -> Result<Output> {
    let bytes = read_file(&args.input)?;
    let magic = bytes.get(..4).unwrap_or(&bytes[..]);
    if magic == RAW_MAGIC {
        let f = codec::read_tensor_file(&bytes)?;
        let mut text = format!(
            "tensor file (ADLT v1), {} tensors, {} bytes\n",
            f.tensors.len(),
            bytes.len()
        );
        let mut rows = Vec::new();
        let mut js = Vec::new();
        for t in &f.tensors {
            let shape = shape_str(&t.shape);
            writeln!(text, "{}  shape {}  values {}", t.name, shape, t.values.len()).unwrap();
            rows.push(vec![t.name.clone(), shape, t.values.len().to_string()]);
            js.push(json!({ "name": t.name, "shape": t.shape, "values": t.values.len() }));
        }
        return Ok(Output {
            text,
            json: json!({ "format": "ADLT", "version": 1, "bytes": bytes.len(), "tensors": js }),
            csv: csv_string("name,shape,values", &rows),
        });
    }
    if magic == COMPRESSED_MAGIC {
        let c = codec::read_compressed(&bytes)?;
        let mut text = format!(
            "compressed adapter (SLDQ v1), {} tensors, {} bytes, checksum ok\nbits {}  flavor {}  omega {}  gamma multiplier {}\n",
            c.tensors.len(),
            bytes.len(),
            c.bits,
            c.flavor,
            sig(c.omega),
            sig(c.gamma_multiplier)
        );
        let mut rows = Vec::new();
        let mut js = Vec::new();
        for t in &c.tensors {
            let shape = shape_str(t.tensor.shape());
            let levels = t.tensor.codebook().len();
            let entropy = index_entropy(&t.tensor);
            writeln!(
                text,
                "{}  shape {}  levels {}  index width {}  entropy {} bits",
                t.name,
                shape,
                levels,
                index_width(levels),
                sig(entropy)
            )
            .unwrap();
            rows.push(vec![
                t.name.clone(),
                shape,
                levels.to_string(),
                index_width(levels).to_string(),
                sig(entropy),
            ]);
            js.push(json!({
                "name": t.name,
                "shape": t.tensor.shape(),
                "levels": levels,
                "index_width": index_width(levels),
                "entropy_bits": round_sig(entropy),
            }));
        }
        return Ok(Output {
            text,
            json: json!({
                "format": "SLDQ",
                "version": 1,
                "bytes": bytes.len(),
                "bits": c.bits,
                "flavor": c.flavor,
                "omega": round_sig(c.omega),
                "gamma_multiplier": round_sig(c.gamma_multiplier),
                "tensors": js,
            }),
            csv: csv_string("name,shape,levels,index_width,entropy", &rows),
        });
    }
    Err(Error::corrupt(
        "magic",
        format!("unrecognized file signature {magic:02x?}"),
    ))
}
