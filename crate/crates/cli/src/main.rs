//! `fdl`: reproducible experiment runs for Fourier-space diffusion.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{CommonArgs, Schedule};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<fdl_core::Error> for CliError {
    fn from(e: fdl_core::Error) -> Self {
        // a rejected parameter is a usage problem; everything else happened mid-run
        match e {
            fdl_core::Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fdl", version, about = "Fourier-space diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Dots,
    PowerLaw,
    Mixture1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BandSide {
    Low,
    High,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (FTEN; --out is the file, default data.ften)
    GenData(GenDataArgs),
    /// Estimate the per-frequency variance profile of --data (CSV rank,bin,distance,variance)
    EstimateC(EstimateArgs),
    /// Emit a mixing schedule, optionally calibrated (CSV t,alphabar,mean_snr_db)
    Schedule(ScheduleArgs),
    /// Forward-process SNR heatmap over --data (CSV t,rank,snr_db)
    ForwardSim(ForwardSimArgs),
    /// Train an MLP denoiser on --data (--out is a directory, default train)
    Train(TrainArgs),
    /// DDIM samples as FTEN and PGM (--out is a directory, default samples)
    Sample(SampleArgs),
    /// Normality diagnostics of the reverse process
    #[command(subcommand)]
    Diagnose(Diagnose),
    /// Power-law spectral classifier with permutation tests (--out is a directory, default detect)
    Detect(DetectArgs),
    /// Spectral, intensity and variance-trajectory profiles (--out is a directory, default report)
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum Diagnose {
    /// KL of reconstructed reverse posteriors at selected ranks (CSV process,t,rank,kl)
    Violation(ViolationArgs),
    /// TV from the bimodal-prior posterior to its best Gaussian (CSV delta,tv,mu,sigma)
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub generator: Generator,
    /// Number of items
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Image height (dots, power-law)
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    /// Image width (dots, power-law)
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Fewest white pixels per dots image
    #[arg(long, default_value_t = 46)]
    pub min_count: usize,
    /// Most white pixels per dots image
    #[arg(long, default_value_t = 50)]
    pub max_count: usize,
    /// Power-law amplitude A in C = A (1 + dist)^-p
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Power-law exponent p
    #[arg(long, default_value_t = 2.0)]
    pub exponent: f64,
    /// Mixture component width
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Schedule kind; same as --schedule
    #[arg(long, value_enum)]
    pub kind: Option<Schedule>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ForwardSimArgs {
    /// Timestep stride [default: T/100, at least 1]
    #[arg(long)]
    pub every: Option<usize>,
    /// Monte Carlo estimate over the dataset instead of the closed form
    #[arg(long)]
    pub empirical: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// SGD updates M
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Examples per update
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Momentum coefficient (0 = plain SGD)
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Hidden width of both layers
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Training output directory holding model.fdlm and profile.ften
    #[arg(long, conflicts_with = "analytic")]
    pub model: Option<PathBuf>,
    /// Use the exact linear Gaussian denoiser for the profile of --data
    #[arg(long)]
    pub analytic: bool,
    /// Number of samples
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Inference steps [default: T]
    #[arg(long)]
    pub t_inference: Option<usize>,
    /// Write per-step variances across samples (CSV t,rank,variance)
    #[arg(long)]
    pub trajectory: bool,
    /// Number of PGM previews
    #[arg(long, default_value_t = 16)]
    pub pgm: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ViolationArgs {
    /// Reverse step to examine
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    /// Frequency ranks [default: the 4 lowest non-DC and the 4 highest]
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    /// Component widths
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
    pub delta: Vec<f64>,
    /// Observation noise variance
    #[arg(long, default_value_t = 4.0)]
    pub noise_var: f64,
    /// Observed value
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub y: f64,
    /// Also dump each posterior as CSV x,mass into this directory
    #[arg(long)]
    pub density_dir: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Real images (FTEN); falls back to --data
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Generated images (FTEN)
    #[arg(long)]
    pub generated: PathBuf,
    /// Band proportions
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.15,0.25")]
    pub bands: Vec<f64>,
    /// Which end of the spectrum each band covers
    #[arg(long, value_enum, default_value_t = BandSide::High)]
    pub band_kind: BandSide,
    /// Independent partitions
    #[arg(long, default_value_t = 100)]
    pub splits: usize,
    /// Label permutations per test
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Generated images to profile alongside --data
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// Inference steps for the variance trajectory [default: T]
    #[arg(long)]
    pub t_inference: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let env_seed = env_seed.as_deref();
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a, env_seed),
        Command::EstimateC(a) => commands::estimate_c(&a, env_seed),
        Command::Schedule(a) => commands::schedule(&a, env_seed),
        Command::ForwardSim(a) => commands::forward_sim(&a, env_seed),
        Command::Train(a) => commands::train(&a, env_seed),
        Command::Sample(a) => commands::sample(&a, env_seed),
        Command::Diagnose(Diagnose::Violation(a)) => commands::violation(&a, env_seed),
        Command::Diagnose(Diagnose::Counterexample(a)) => commands::counterexample(&a, env_seed),
        Command::Detect(a) => commands::detect(&a, env_seed),
        Command::Report(a) => commands::report(&a, env_seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("manifest: {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
