//! Run configuration: a plain `key = value` file overlaid by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use fdl_core::process::ProcessKind;
use fdl_core::schedule::ScheduleKind;

use crate::CliError;

/// Seed fallback consulted when neither a flag nor the file sets one.
pub const SEED_ENV: &str = "FDL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Linear,
    Cosine,
}

impl From<Schedule> for ScheduleKind {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Linear => ScheduleKind::Linear,
            Schedule::Cosine => ScheduleKind::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Ddpm,
    Equalsnr,
    Flippedsnr,
}

impl From<Process> for ProcessKind<f64> {
    fn from(p: Process) -> Self {
        match p {
            Process::Ddpm => ProcessKind::Ddpm,
            Process::Equalsnr => ProcessKind::equal_snr(),
            Process::Flippedsnr => ProcessKind::FlippedSnr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Calibrate {
    None,
    ToDdpm,
    ToEqualsnr,
}

/// Flags shared by every subcommand. Each one overrides the matching key
/// of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// `key = value` file with any of: seed, T, schedule, process,
    /// calibrate, workers, out, data
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// RNG seed [default: $FDL_SEED, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of diffusion steps [default: 1000]
    #[arg(long = "T", value_name = "T")]
    pub steps: Option<usize>,
    /// Mixing schedule [default: cosine]
    #[arg(long, value_enum)]
    pub schedule: Option<Schedule>,
    /// Forward process [default: ddpm]
    #[arg(long, value_enum)]
    pub process: Option<Process>,
    /// Match mean SNR to the other process [default: none]
    #[arg(long, value_enum)]
    pub calibrate: Option<Calibrate>,
    /// Worker threads; results never depend on it [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path (file or directory, see the subcommand help)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input dataset (FTEN file)
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub schedule: Schedule,
    pub process: Process,
    pub calibrate: Calibrate,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            steps: 1000,
            schedule: Schedule::Cosine,
            process: Process::Ddpm,
            calibrate: Calibrate::None,
            workers: 1,
            out: None,
            data: None,
        }
    }
}

#[derive(Debug, Default)]
struct FileValues {
    seed: Option<u64>,
    steps: Option<usize>,
    schedule: Option<Schedule>,
    process: Option<Process>,
    calibrate: Option<Calibrate>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("line {line}: bad value `{value}` for `{key}`: {e}")))
}

fn parse_enum<T: ValueEnum>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    T::from_str(value, false).map_err(|e| CliError::Config(format!("line {line}: bad value for `{key}`: {e}")))
}

fn parse_file(text: &str, base: &Path) -> Result<FileValues, CliError> {
    let mut v = FileValues::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {line}: expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "seed" => v.seed = Some(parse_value(line, key, value)?),
            "T" => v.steps = Some(parse_value(line, key, value)?),
            "schedule" => v.schedule = Some(parse_enum(line, key, value)?),
            "process" => v.process = Some(parse_enum(line, key, value)?),
            "calibrate" => v.calibrate = Some(parse_enum(line, key, value)?),
            "workers" => v.workers = Some(parse_value(line, key, value)?),
            // relative paths in the file resolve against the file's directory
            "out" => v.out = Some(base.join(value)),
            "data" => v.data = Some(base.join(value)),
            other => return Err(CliError::Config(format!("line {line}: unknown key `{other}`"))),
        }
    }
    Ok(v)
}

impl RunConfig {
    /// Resolves flags over file values over `FDL_SEED` over defaults.
    pub fn resolve(args: &CommonArgs, env_seed: Option<&str>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                parse_file(&text, base)
                    .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => FileValues::default(),
        };
        let env_seed = env_seed
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| CliError::Config(format!("{SEED_ENV}=`{s}` is not a seed: {e}")))
            })
            .transpose()?;
        let d = RunConfig::default();
        let cfg = RunConfig {
            seed: args.seed.or(file.seed).or(env_seed).unwrap_or(d.seed),
            steps: args.steps.or(file.steps).unwrap_or(d.steps),
            schedule: args.schedule.or(file.schedule).unwrap_or(d.schedule),
            process: args.process.or(file.process).unwrap_or(d.process),
            calibrate: args.calibrate.or(file.calibrate).unwrap_or(d.calibrate),
            workers: args.workers.or(file.workers).unwrap_or(d.workers),
            out: args.out.clone().or(file.out),
            data: args.data.clone().or(file.data),
        };
        if cfg.steps == 0 {
            return Err(CliError::Config("T must be at least 1".into()));
        }
        if cfg.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let Some(p) = &cfg.data {
            if !p.is_file() {
                return Err(CliError::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn require_data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs --data".into()))
    }

    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    /// `key = value` lines describing the resolved configuration.
    pub fn describe(&self) -> Vec<(String, String)> {
        let name = |v: &dyn ValueEnumName| v.name();
        vec![
            ("seed".into(), self.seed.to_string()),
            ("T".into(), self.steps.to_string()),
            ("schedule".into(), name(&self.schedule)),
            ("process".into(), name(&self.process)),
            ("calibrate".into(), name(&self.calibrate)),
            ("workers".into(), self.workers.to_string()),
        ]
    }
}

trait ValueEnumName {
    fn name(&self) -> String;
}

impl<T: ValueEnum> ValueEnumName for T {
    fn name(&self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> Result<FileValues, CliError> {
        parse_file(text, Path::new(""))
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::resolve(&CommonArgs::default(), None).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_key_named_with_line() {
        let err = file("seed = 3\n\n# note\nfoo = 1\n").unwrap_err();
        let msg = err.message();
        assert!(msg.contains("line 4") && msg.contains("`foo`"), "{msg}");
    }

    #[test]
    fn values_parse() {
        let v = file("seed=9\nT = 50 # short run\nschedule = linear\nprocess = flippedsnr\ncalibrate = to-ddpm\n").unwrap();
        assert_eq!(v.seed, Some(9));
        assert_eq!(v.steps, Some(50));
        assert_eq!(v.schedule, Some(Schedule::Linear));
        assert_eq!(v.process, Some(Process::Flippedsnr));
        assert_eq!(v.calibrate, Some(Calibrate::ToDdpm));
        assert!(file("T = ten").unwrap_err().message().contains("line 1"));
        assert!(file("just words").is_err());
    }

    #[test]
    fn env_seed_is_last_resort() {
        let cfg = RunConfig::resolve(&CommonArgs::default(), Some("17")).unwrap();
        assert_eq!(cfg.seed, 17);
        let args = CommonArgs {
            seed: Some(4),
            ..CommonArgs::default()
        };
        assert_eq!(RunConfig::resolve(&args, Some("17")).unwrap().seed, 4);
        assert!(RunConfig::resolve(&CommonArgs::default(), Some("x")).is_err());
    }

    #[test]
    fn rejects_zero_steps() {
        let args = CommonArgs {
            steps: Some(0),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args, None).is_err());
    }
}
