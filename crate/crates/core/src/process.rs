//! Forward (noising) processes in Fourier space.
//!
//! All three processes share `y_t = √ᾱ_t y_0 + √(1−ᾱ_t) ε_Σ` and differ only
//! in the diagonal noise covariance `Σ`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::schedule::{snr_profile, MixingSchedule, SnrProfile, VarianceProfile, VARIANCE_FLOOR};
use crate::spectral::{frequency_order, sample_hermitian_noise, Shape, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessKind<F> {
    /// White noise, `Σ = I`.
    Ddpm,
    /// `Σ = c0·C`: every frequency shares one SNR.
    EqualSnr { c0: F },
    /// `Σ_i = C_i / C_flip(i)`: the DDPM SNR profile mirrored across ranks.
    FlippedSnr,
}

impl<F: Real> ProcessKind<F> {
    pub fn equal_snr() -> Self {
        ProcessKind::EqualSnr { c0: F::one() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::Ddpm => "ddpm",
            ProcessKind::EqualSnr { .. } => "equalsnr",
            ProcessKind::FlippedSnr => "flippedsnr",
        }
    }
}

impl<F: Real> std::str::FromStr for ProcessKind<F> {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(ProcessKind::Ddpm),
            "equalsnr" => Ok(ProcessKind::equal_snr()),
            "flippedsnr" => Ok(ProcessKind::FlippedSnr),
            other => Err(Error::InvalidArgument(format!("unknown process kind `{other}`"))),
        }
    }
}

/// Per-frequency noise variance for a process kind.
///
/// The result is averaged over conjugate pairs so that Hermitian noise can
/// realize it exactly; for profiles that are already pair-symmetric (any
/// profile estimated from real data) this changes nothing. A relative floor
/// of `1e-12 × max` keeps every entry positive.
pub fn noise_covariance<F: Real>(kind: ProcessKind<F>, c: &VarianceProfile<F>) -> Vec<F> {
    let raw: Vec<F> = match kind {
        ProcessKind::Ddpm => vec![F::one(); c.len()],
        ProcessKind::EqualSnr { c0 } => c.values().iter().map(|&v| c0 * v).collect(),
        ProcessKind::FlippedSnr => c
            .values()
            .iter()
            .zip(c.flipped())
            .map(|(&v, f)| v / f)
            .collect(),
    };
    let shape = c.shape();
    let half = F::lit(0.5);
    let mut sigma: Vec<F> = (0..raw.len())
        .map(|j| {
            let p = shape.partner(j);
            if p == j {
                raw[j]
            } else {
                (raw[j] + raw[p]) * half
            }
        })
        .collect();
    let floor = sigma.iter().copied().fold(F::zero(), F::max) * F::lit(VARIANCE_FLOOR);
    for s in &mut sigma {
        *s = s.max(floor);
    }
    sigma
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardProcess<F> {
    kind: ProcessKind<F>,
    sigma: Vec<F>,
    schedule: MixingSchedule<F>,
    c: VarianceProfile<F>,
}

impl<F: Real> ForwardProcess<F> {
    pub fn new(kind: ProcessKind<F>, schedule: MixingSchedule<F>, c: VarianceProfile<F>) -> Result<Self> {
        if let ProcessKind::EqualSnr { c0 } = kind {
            if !(c0 > F::zero()) || !c0.is_finite() {
                return Err(Error::InvalidArgument(format!("EqualSNR constant must be positive, got {c0}")));
            }
        }
        let sigma = noise_covariance(kind, &c);
        Ok(ForwardProcess {
            kind,
            sigma,
            schedule,
            c,
        })
    }

    pub fn kind(&self) -> ProcessKind<F> {
        self.kind
    }

    pub fn sigma(&self) -> &[F] {
        &self.sigma
    }

    pub fn schedule(&self) -> &MixingSchedule<F> {
        &self.schedule
    }

    pub fn c(&self) -> &VarianceProfile<F> {
        &self.c
    }

    pub fn shape(&self) -> &Shape {
        self.c.shape()
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    /// Draws `ε_Σ`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Spectrum<F> {
        sample_hermitian_noise(&self.sigma, self.c.shape(), rng).expect("Σ is validated at construction")
    }

    /// Analytic SNR profile at step `t`.
    pub fn snr(&self, t: usize) -> Result<SnrProfile<F>> {
        snr_profile(self.kind, &self.schedule, &self.c, t)
    }

    /// Closed-form per-bin variance of `y_t` for data with variance `C`.
    pub fn marginal_variance(&self, t: usize) -> Result<Vec<F>> {
        let (a, comp) = self.schedule.at(t)?;
        Ok(self
            .c
            .values()
            .iter()
            .zip(&self.sigma)
            .map(|(&ci, &si)| a * ci + comp * si)
            .collect())
    }

    fn check_shape(&self, y: &Spectrum<F>) -> Result<()> {
        if y.shape() != self.c.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.c.shape().dims().to_vec(),
                got: y.shape().dims().to_vec(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyState<F> {
    pub y: Spectrum<F>,
    pub t: usize,
}

/// Samples `y_t | y_0` in one shot.
pub fn forward_marginal_sample<F: Real, R: Rng + ?Sized>(
    y0: &Spectrum<F>,
    t: usize,
    p: &ForwardProcess<F>,
    rng: &mut R,
) -> Result<NoisyState<F>> {
    p.check_shape(y0)?;
    let (a, comp) = p.schedule.at(t)?;
    if t == 0 {
        return Ok(NoisyState { y: y0.clone(), t });
    }
    let eps = p.sample_noise(rng);
    let y = y0.axpby(a.sqrt(), &eps, comp.sqrt())?;
    Ok(NoisyState { y, t })
}

/// Advances `y_{t−1}` to `y_t` with retain ratio `ρ_t = ᾱ_t/ᾱ_{t−1}`.
pub fn forward_step_sample<F: Real, R: Rng + ?Sized>(
    y_prev: &NoisyState<F>,
    t: usize,
    p: &ForwardProcess<F>,
    rng: &mut R,
) -> Result<NoisyState<F>> {
    p.check_shape(&y_prev.y)?;
    if t == 0 || t > p.steps() || y_prev.t + 1 != t {
        return Err(Error::TimestepOutOfRange { t, max: p.steps() });
    }
    let (rho, one_minus) = p.schedule.retain(t)?;
    let eps = p.sample_noise(rng);
    let y = y_prev.y.axpby(rho.sqrt(), &eps, one_minus.sqrt())?;
    Ok(NoisyState { y, t })
}

/// Running per-bin `Var(Re) + Var(Im)` accumulator (Welford).
#[derive(Debug, Clone)]
pub struct BinVariance {
    n: usize,
    mean_re: Vec<f64>,
    mean_im: Vec<f64>,
    m2: Vec<f64>,
}

impl BinVariance {
    pub fn new(d: usize) -> Self {
        BinVariance {
            n: 0,
            mean_re: vec![0.0; d],
            mean_im: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub fn push<F: Real>(&mut self, y: &Spectrum<F>) {
        self.n += 1;
        let n = self.n as f64;
        for (j, z) in y.data().iter().enumerate() {
            let (re, im) = (z.re.as_f64(), z.im.as_f64());
            let dr = re - self.mean_re[j];
            let di = im - self.mean_im[j];
            self.mean_re[j] += dr / n;
            self.mean_im[j] += di / n;
            self.m2[j] += dr * (re - self.mean_re[j]) + di * (im - self.mean_im[j]);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Unbiased per-bin variances (needs at least two observations).
    pub fn variance(&self) -> Vec<f64> {
        let den = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|m| m / den).collect()
    }

    pub fn mean(&self) -> Vec<(f64, f64)> {
        self.mean_re.iter().copied().zip(self.mean_im.iter().copied()).collect()
    }
}

/// Monte Carlo SNR: per-bin variance of `√ᾱ_t y_0` over the dataset divided
/// by the variance of `√(1−ᾱ_t) ε_Σ`, one noise draw per item.
pub fn empirical_snr<F: Real, R: Rng + ?Sized>(
    signals: &[Spectrum<F>],
    p: &ForwardProcess<F>,
    t: usize,
    rng: &mut R,
) -> Result<SnrProfile<F>> {
    if signals.len() < 2 {
        return Err(Error::DatasetTooSmall {
            need: 2,
            got: signals.len(),
        });
    }
    let (a, comp) = p.schedule.at(t)?;
    let d = p.shape().len();
    let mut sig = BinVariance::new(d);
    let mut noise = BinVariance::new(d);
    for y0 in signals {
        p.check_shape(y0)?;
        sig.push(y0);
        noise.push(&p.sample_noise(rng));
    }
    let (a, comp) = (a.as_f64(), comp.as_f64());
    let values = sig
        .variance()
        .into_iter()
        .zip(noise.variance())
        .map(|(vs, vn)| F::lit(a * vs / (comp * vn)))
        .collect();
    SnrProfile::new(values)
}

/// Rows `(t, rank, snr_db)` of the analytic SNR heatmap, `t`-major.
pub fn snr_heatmap<F: Real>(p: &ForwardProcess<F>, steps: &[usize]) -> Result<Vec<(usize, usize, F)>> {
    let order = frequency_order(p.shape());
    let mut rows = Vec::with_capacity(steps.len() * order.len());
    for &t in steps {
        let db = p.snr(t)?.to_db();
        for (rank, &j) in order.ranks().iter().enumerate() {
            rows.push((t, rank, db[j]));
        }
    }
    Ok(rows)
}
