//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input problems (including I/O), 3
//! numeric or domain failures, 4 corrupt data.

mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Io(_) => EXIT_USAGE,
        Error::Domain(_) | Error::Numeric { .. } => EXIT_NUMERIC,
        Error::CorruptData { .. } => EXIT_CORRUPT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "sinedelta",
    version,
    about = "Quantize, store and analyse sine-activated low-rank adapters"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    /// Worker threads for per-tensor and per-seed parallelism.
    #[arg(long, default_value_t = 1, global = true)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize every tensor of a raw tensor file into a compressed container.
    Quantize(QuantizeArgs),
    /// Rebuild one weight delta per layer from a compressed container.
    Reconstruct(ReconstructArgs),
    /// Stable ranks over a grid of ranks, frequencies and bit widths.
    Sweep(SweepArgs),
    /// Check the quantized stable-rank bound on seeded random matrices.
    VerifyTheorem(VerifyArgs),
    /// Bjøntegaard-Delta comparison of two rate,quality CSV curves.
    Bd(BdArgs),
    /// Fit plain and sine adapters to random orthogonal targets.
    Fit(FitArgs),
    /// Describe a tensor file or compressed container.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed; seeds run from here upward.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SeedArgs {
    fn list(&self) -> Vec<u64> {
        (self.seed..self.seed.saturating_add(self.seeds)).collect()
    }
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Raw tensor file (ADLT).
    #[arg(long)]
    pub input: PathBuf,
    /// Compressed container to write (SLDQ).
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
    pub bits: u8,
    /// Adapter flavor recorded in the container.
    #[arg(long, default_value = "sine")]
    pub flavor: String,
    #[arg(long, default_value_t = crate::adapter::DEFAULT_OMEGA)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_multiplier: f64,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Compressed container (SLDQ) holding `<layer>.A` / `<layer>.B` pairs.
    #[arg(long)]
    pub input: PathBuf,
    /// Raw tensor file (ADLT) to write, one delta per layer.
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the container's flavor.
    #[arg(long)]
    pub flavor: Option<String>,
    /// Overrides the container's frequency.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Overrides the container's gamma multiplier.
    #[arg(long)]
    pub gamma_multiplier: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,200,1000")]
    pub omegas: Vec<f64>,
    /// Bit widths; `full` means unquantized.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,8,full")]
    pub bits: Vec<String>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    /// Also write every point as CSV to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 128)]
    pub rows: usize,
    #[arg(long, default_value_t = 128)]
    pub cols: usize,
    /// Each Gaussian matrix is rescaled to this largest singular value.
    #[arg(long, default_value_t = 100.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=16))]
    pub bits: u8,
    #[command(flatten)]
    pub seeds: SeedArgs,
}

#[derive(Debug, Args)]
pub struct BdArgs {
    /// Reference curve CSV (rate,quality).
    #[arg(long)]
    pub anchor: PathBuf,
    /// Test curve CSV (rate,quality).
    #[arg(long)]
    pub test: PathBuf,
    /// `akima` or `cubic`.
    #[arg(long, default_value = "akima")]
    pub interpolator: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = crate::adapter::DEFAULT_OMEGA)]
    pub omega: f64,
    /// Defaults to √cols.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub plain_lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub sine_lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[command(flatten)]
    pub seeds: SeedArgs,
    /// Also write every fit as CSV to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub input: PathBuf,
}

/// A command's result in every output format.
pub struct Output {
    pub text: String,
    pub json: Value,
    pub csv: String,
}

impl Output {
    fn render(&self, format: Format) -> &str {
        match format {
            Format::Text => &self.text,
            Format::Csv => &self.csv,
            Format::Json => "",
        }
    }
}

/// Runs one parsed invocation, writing results to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))
        .and_then(|pool| pool.install(|| commands::dispatch(&cli.command)));
    match result {
        Ok(output) => {
            let written = match cli.format {
                Format::Json => serde_json::to_string_pretty(&output.json)
                    .map_err(std::io::Error::other)
                    .and_then(|s| writeln!(out, "{s}")),
                f => write!(out, "{}", output.render(f)),
            };
            match written {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_USAGE
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `std::env::args` and runs.
pub fn run() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => execute(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock()),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
