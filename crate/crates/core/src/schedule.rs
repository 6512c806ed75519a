//! Mixing schedules, per-frequency SNR and schedule calibration.
//!
//! A schedule keeps both `ᾱ_t` and `1 − ᾱ_t`. The complement is computed
//! directly from its closed form rather than by subtraction, so SNRs stay
//! accurate at small `t` where `ᾱ_t` is within a few ulps of 1.

use crate::error::{Error, Result};
use crate::process::ProcessKind;
use crate::scalar::Real;
use crate::spectral::{frequency_order, Shape};

/// Lower clamp on `ᾱ_t` (and on `1 − ᾱ_t`) for `t ≥ 1`.
pub const ALPHABAR_CLAMP: f64 = 1e-8;
/// Cosine schedule offset.
pub const COSINE_S: f64 = 0.008;
pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;
/// Relative floor for variance profiles.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
    Custom,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            "custom" => Ok(ScheduleKind::Custom),
            other => Err(Error::InvalidArgument(format!("unknown schedule kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingSchedule<F> {
    alphabar: Vec<F>,
    complement: Vec<F>,
    kind: ScheduleKind,
}

impl<F: Real> MixingSchedule<F> {
    /// Builds a schedule from `(ᾱ_t, 1 − ᾱ_t)` pairs for `t = 1..=T`,
    /// prepending `ᾱ_0 = 1` and applying the clamps.
    fn from_pairs(pairs: Vec<(F, F)>, kind: ScheduleKind) -> Result<Self> {
        let lo = F::lit(ALPHABAR_CLAMP);
        let hi = F::one() - lo;
        let mut alphabar = Vec::with_capacity(pairs.len() + 1);
        let mut complement = Vec::with_capacity(pairs.len() + 1);
        alphabar.push(F::one());
        complement.push(F::zero());
        for (a, c) in pairs {
            if a > hi || c < lo {
                alphabar.push(hi);
                complement.push(lo);
            } else if a < lo {
                alphabar.push(lo);
                complement.push(hi);
            } else {
                alphabar.push(a);
                complement.push(c);
            }
        }
        let s = MixingSchedule {
            alphabar,
            complement,
            kind,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.alphabar.len() < 2 {
            return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
        }
        for t in 1..self.alphabar.len() {
            let (a, c) = (self.alphabar[t], self.complement[t]);
            if !(a.is_finite() && c.is_finite()) || a <= F::zero() || a >= F::one() {
                return Err(Error::InvalidArgument(format!("alphabar[{t}] = {a} outside (0, 1)")));
            }
            if self.alphabar[t] >= self.alphabar[t - 1] || self.complement[t] <= self.complement[t - 1] {
                return Err(Error::InvalidArgument(format!(
                    "alphabar not strictly decreasing at t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Custom schedule from explicit values `ᾱ_1..ᾱ_T` (`ᾱ_0 = 1` is implied).
    pub fn custom(alphabar_1_to_t: &[F]) -> Result<Self> {
        let pairs = alphabar_1_to_t.iter().map(|&a| (a, F::one() - a)).collect();
        Self::from_pairs(pairs, ScheduleKind::Custom)
    }

    /// `T`, the number of forward steps.
    pub fn steps(&self) -> usize {
        self.alphabar.len() - 1
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `ᾱ_0..ᾱ_T`.
    pub fn alphabar(&self) -> &[F] {
        &self.alphabar
    }

    /// `1 − ᾱ_0..1 − ᾱ_T`, each computed without cancellation.
    pub fn complement(&self) -> &[F] {
        &self.complement
    }

    pub fn at(&self, t: usize) -> Result<(F, F)> {
        self.check(t)?;
        Ok((self.alphabar[t], self.complement[t]))
    }

    pub(crate) fn check(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::TimestepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }

    /// Retain ratio `ρ_t = ᾱ_t/ᾱ_{t−1}` and its complement `1 − ρ_t`, for `t ≥ 1`.
    pub fn retain(&self, t: usize) -> Result<(F, F)> {
        self.check(t)?;
        if t == 0 {
            return Err(Error::TimestepOutOfRange { t, max: self.steps() });
        }
        let (a, ap) = (self.alphabar[t], self.alphabar[t - 1]);
        let rho = a / ap;
        // 1 − a/ap = (c − cp)/ap with c = 1 − a, cp = 1 − ap
        let one_minus = (self.complement[t] - self.complement[t - 1]) / ap;
        Ok((rho, one_minus))
    }
}

pub fn make_schedule<F: Real>(kind: ScheduleKind, steps: usize) -> Result<MixingSchedule<F>> {
    if steps < 1 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    let n = steps as f64;
    let pairs: Vec<(f64, f64)> = match kind {
        ScheduleKind::Cosine => {
            let half_pi = std::f64::consts::FRAC_PI_2;
            let theta = |t: f64| (t / n + COSINE_S) / (1.0 + COSINE_S) * half_pi;
            let th0 = theta(0.0);
            let c0 = th0.cos().powi(2);
            (1..=steps)
                .map(|t| {
                    let th = theta(t as f64);
                    let a = th.cos().powi(2) / c0;
                    let comp = (th - th0).sin() * (th + th0).sin() / c0;
                    (a, comp)
                })
                .collect()
        }
        ScheduleKind::Linear => {
            let mut log_a = 0.0f64;
            (1..=steps)
                .map(|t| {
                    let beta = if steps == 1 {
                        LINEAR_BETA_START
                    } else {
                        LINEAR_BETA_START
                            + (LINEAR_BETA_END - LINEAR_BETA_START) * (t - 1) as f64 / (n - 1.0)
                    };
                    log_a += (-beta).ln_1p();
                    (log_a.exp(), -log_a.exp_m1())
                })
                .collect()
        }
        ScheduleKind::Custom => {
            return Err(Error::InvalidArgument(
                "custom schedules are built with MixingSchedule::custom".into(),
            ))
        }
    };
    MixingSchedule::from_pairs(
        pairs.into_iter().map(|(a, c)| (F::lit(a), F::lit(c))).collect(),
        kind,
    )
}

/// Per-frequency signal variance `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile<F> {
    c: Vec<F>,
    shape: Shape,
}

impl<F: Real> VarianceProfile<F> {
    /// Validates and floors entries at `1e-12 × max`. An all-zero profile
    /// is floored at `1e-12` absolute.
    pub fn new(c: Vec<F>, shape: Shape) -> Result<Self> {
        if c.len() != shape.len() {
            return Err(Error::InvalidProfile(format!(
                "length {} does not match shape {:?}",
                c.len(),
                shape.dims()
            )));
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::InvalidProfile(format!("entry {i} is {}", c[i])));
        }
        let max = c.iter().copied().fold(F::zero(), F::max);
        let floor = if max > F::zero() {
            max * F::lit(VARIANCE_FLOOR)
        } else {
            F::lit(VARIANCE_FLOOR)
        };
        let c = c.into_iter().map(|v| v.max(floor)).collect();
        Ok(VarianceProfile { c, shape })
    }

    pub fn values(&self) -> &[F] {
        &self.c
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn mean(&self) -> F {
        self.c.iter().copied().sum::<F>() / F::from_usize_lossy(self.c.len())
    }

    /// Entries reindexed so that rank `r` takes the value at rank `d−1−r`.
    pub fn flipped(&self) -> Vec<F> {
        let order = frequency_order(&self.shape);
        (0..self.c.len()).map(|j| self.c[order.flip(j)]).collect()
    }
}

/// Per-frequency SNR at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrProfile<F> {
    values: Vec<F>,
}

impl<F: Real> SnrProfile<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::InvalidInput(format!("SNR entry {i} is {}", values[i])));
        }
        Ok(SnrProfile { values })
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn to_db(&self) -> Vec<F> {
        self.values.iter().map(|&v| F::lit(10.0) * v.log10()).collect()
    }
}

/// SNR of every frequency at step `t` in closed form.
pub fn snr_profile<F: Real>(
    kind: ProcessKind<F>,
    schedule: &MixingSchedule<F>,
    c: &VarianceProfile<F>,
    t: usize,
) -> Result<SnrProfile<F>> {
    let (a, comp) = schedule.at(t)?;
    if comp == F::zero() {
        return Err(Error::InfiniteSnr { t });
    }
    let values = match kind {
        ProcessKind::Ddpm => c.values().iter().map(|&ci| a * ci / comp).collect(),
        ProcessKind::EqualSnr { c0 } => vec![a / (comp * c0); c.len()],
        ProcessKind::FlippedSnr => c.flipped().into_iter().map(|cf| a * cf / comp).collect(),
    };
    SnrProfile::new(values)
}

/// Mixing coefficient that produces SNR `s` for a bin with signal variance
/// `c_i` and noise variance `sigma_ii`.
pub fn alphabar_from_snr<F: Real>(s: F, c_i: F, sigma_ii: F) -> Result<F> {
    if !(c_i > F::zero() && sigma_ii > F::zero()) {
        return Err(Error::InvalidArgument(format!(
            "variances must be positive (C = {c_i}, Σ = {sigma_ii})"
        )));
    }
    if !(s >= F::zero()) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be finite and >= 0, got {s}")));
    }
    Ok(s * sigma_ii / (c_i + s * sigma_ii))
}

pub fn mean_snr<F: Real>(profile: &SnrProfile<F>) -> Result<F> {
    if profile.values.is_empty() {
        return Err(Error::InvalidInput("empty SNR profile".into()));
    }
    Ok(profile.values.iter().copied().sum::<F>() / F::from_usize_lossy(profile.values.len()))
}

/// Pre-clamp equal-SNR mixing coefficient matching a DDPM coefficient
/// `(a, 1 − a)` for mean signal variance `m`. Returns `(ᾱ_eq, 1 − ᾱ_eq)`.
pub fn equal_from_ddpm<F: Real>(a: F, comp: F, m: F) -> (F, F) {
    let den = comp + a * m;
    (a * m / den, comp / den)
}

/// Pre-clamp inverse of [`equal_from_ddpm`].
pub fn ddpm_from_equal<F: Real>(a: F, comp: F, m: F) -> (F, F) {
    let den = m * comp + a;
    (a / den, m * comp / den)
}

fn map_schedule<F: Real>(
    s: &MixingSchedule<F>,
    c: &VarianceProfile<F>,
    f: fn(F, F, F) -> (F, F),
) -> Result<MixingSchedule<F>> {
    let m = c.mean();
    let pairs = (1..=s.steps())
        .map(|t| f(s.alphabar[t], s.complement[t], m))
        .collect();
    MixingSchedule::from_pairs(pairs, ScheduleKind::Custom)
}

/// EqualSNR schedule whose frequency-averaged SNR matches the DDPM schedule.
pub fn calibrate_to_ddpm<F: Real>(
    ddpm: &MixingSchedule<F>,
    c: &VarianceProfile<F>,
) -> Result<MixingSchedule<F>> {
    map_schedule(ddpm, c, equal_from_ddpm)
}

/// DDPM schedule whose frequency-averaged SNR matches the EqualSNR schedule.
pub fn calibrate_ddpm_to_equal<F: Real>(
    eq: &MixingSchedule<F>,
    c: &VarianceProfile<F>,
) -> Result<MixingSchedule<F>> {
    map_schedule(eq, c, ddpm_from_equal)
}
