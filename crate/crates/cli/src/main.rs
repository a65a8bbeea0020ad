mod bound;
mod compress;
mod inputs;
mod output;
mod spectra_cmd;
mod synth_cmd;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Compressibility analysis and compression-based generalization bounds.
#[derive(Parser)]
#[command(name = "compbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weight and covariance spectra with power-law envelope fits.
    Spectra(SpectraArgs),
    /// Effective ranks and intrinsic dimensionalities per threshold.
    Tables(TablesArgs),
    /// Build a compressed network.
    Compress(CompressArgs),
    /// Evaluate a generalization bound.
    Bound(BoundArgs),
    /// Generate a seeded fixture network.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct SpectraArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TablesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Relative thresholds in (0,1); defaults to 0.1, 0.01, 0.001.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub nu: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Rank,
    Covariance,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Schedule {
    Uniform,
    Theorem4,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Per-layer ranks for the rank method; omit for full rank.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    /// Per-layer targets r̃_1..r̃_L for the covariance method.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<f64>,
    /// Seed value r̃_1 for a generated schedule (used when --targets is absent).
    #[arg(long)]
    pub target_r1: Option<f64>,
    #[arg(long, value_enum, default_value = "theorem4")]
    pub schedule: Schedule,
    #[arg(long, default_value_t = compbound::compressor::DEFAULT_C0)]
    pub c0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = compbound::compressor::DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    T1,
    T2,
    Cor1,
    T3,
    T4,
    T4lip,
    Sparse,
    Baselines,
}

#[derive(Args)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Compression report JSON from `compress`, supplying r̂ and compressed widths.
    #[arg(long)]
    pub compression: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub clip_m: Option<f64>,
    #[arg(long)]
    pub b_x: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub constant_c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub constant_cq: f64,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub u0: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub rf: Option<f64>,
    /// Nonzero parameter count for the sparse bound.
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub main_rad: Option<f64>,
    #[arg(long)]
    pub r_hat: Option<f64>,
    #[arg(long)]
    pub s1: Option<f64>,
    #[arg(long)]
    pub s2: Option<f64>,
    #[arg(long)]
    pub s3: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SynthKind {
    LowrankWeights,
    LowrankCov,
    Sparse,
    ToyCnn,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    /// `m_1,…,m_{L+1}`
    #[arg(long, value_delimiter = ',', default_value = "16,16,16,1")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u0: f64,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip_m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compression(String),
    Missing(String),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Compression(_) => 3,
            Failure::Missing(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Compression(m) => write!(f, "compression failed: {m}"),
            Failure::Missing(m) => write!(f, "missing prerequisite: {m}"),
            Failure::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<compbound::Error> for Failure {
    fn from(e: compbound::Error) -> Self {
        use compbound::Error as E;
        match e {
            E::Selection { .. } => Failure::Compression(e.to_string()),
            E::MissingPrerequisite(m) => Failure::Missing(m),
            E::Domain(_) => Failure::Usage(e.to_string()),
            other => Failure::Internal(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("COMPBOUND_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring COMPBOUND_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Spectra(a) => spectra_cmd::run(&a),
        Command::Tables(a) => tables::run(&a),
        Command::Compress(a) => compress::run(&a),
        Command::Bound(a) => bound::run(&a),
        Command::Synth(a) => synth_cmd::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("compbound: {f}");
            ExitCode::from(f.code())
        }
    }
}
