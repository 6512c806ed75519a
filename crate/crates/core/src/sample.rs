//! Deterministic DDIM sampling in Fourier space, the variance recurrence
//! that predicts its output for linear denoisers, and the reverse-SNR proxy.

use rand::Rng;

use crate::denoise::{posterior_coefficients, Denoiser};
use crate::error::{Error, Result};
use crate::process::{BinVariance, ForwardProcess, NoisyState};
use crate::scalar::Real;
use crate::schedule::{MixingSchedule, VarianceProfile};
use crate::spectral::{RealField, SpectralPlan, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub t_inference: usize,
    pub seed: u64,
    pub record_trajectory: bool,
}

/// Visited states from `t = T` down to `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    pub states: Vec<NoisyState<F>>,
}

/// Training-grid indices visited at inference, `t_k = round(k T / T_inf)`,
/// in increasing order from `0` to `T`.
pub fn inference_grid(steps: usize, t_inference: usize) -> Result<Vec<usize>> {
    if t_inference == 0 || t_inference > steps {
        return Err(Error::InvalidArgument(format!(
            "inference steps must lie in 1..={steps}, got {t_inference}"
        )));
    }
    Ok((0..=t_inference)
        .map(|k| ((k as f64) * steps as f64 / t_inference as f64).round() as usize)
        .collect())
}

/// One DDIM update from step `y_t.t` to `t_prev`:
/// `y_prev = √ᾱ_prev ŷ_0 + √((1−ᾱ_prev)/(1−ᾱ_t)) (y_t − √ᾱ_t ŷ_0)`.
pub fn ddim_step<F: Real>(
    y_t: &NoisyState<F>,
    y0_hat: &Spectrum<F>,
    schedule: &MixingSchedule<F>,
    t_prev: usize,
) -> Result<NoisyState<F>> {
    let t = y_t.t;
    if t == 0 || t_prev >= t {
        return Err(Error::TimestepOutOfRange { t, max: schedule.steps() });
    }
    let (a, comp) = schedule.at(t)?;
    let (ap, compp) = schedule.at(t_prev)?;
    if comp == F::zero() {
        return Err(Error::InfiniteSnr { t });
    }
    let ratio = (compp / comp).sqrt();
    // y_prev = (√ᾱ_prev − ratio √ᾱ_t) ŷ_0 + ratio y_t
    let y = y0_hat.axpby(ap.sqrt() - ratio * a.sqrt(), &y_t.y, ratio)?;
    Ok(NoisyState { y, t: t_prev })
}

/// Runs the reverse process from `y_T ~ CN(0, Σ)` to `t = 0`.
pub fn ddim_sample<F: Real, D: Denoiser<F> + ?Sized, R: Rng + ?Sized>(
    d: &D,
    p: &ForwardProcess<F>,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(RealField<F>, Option<Trajectory<F>>)> {
    let grid = inference_grid(p.steps(), cfg.t_inference)?;
    let plan = SpectralPlan::new(p.shape());
    let mut state = NoisyState {
        y: p.sample_noise(rng),
        t: p.steps(),
    };
    let mut states = Vec::new();
    if cfg.record_trajectory {
        states.push(state.clone());
    }
    for k in (0..cfg.t_inference).rev() {
        let y0_hat = d.predict(&state.y, state.t)?;
        state = ddim_step(&state, &y0_hat, p.schedule(), grid[k])?;
        if !state.y.is_finite() {
            return Err(Error::SamplerDivergence { step: state.t });
        }
        if cfg.record_trajectory {
            states.push(state.clone());
        }
    }
    let x = plan.inverse(&state.y)?;
    Ok((x, cfg.record_trajectory.then_some(Trajectory { states })))
}

/// DDIM variance multiplier `a` for one linear-denoiser step:
/// `a = √ᾱ_prev k + √((1−ᾱ_prev)/(1−ᾱ_t)) (1 − √ᾱ_t k)` per bin.
pub fn step_multipliers<F: Real>(
    (a, comp): (F, F),
    (ap, compp): (F, F),
    c: &[F],
    sigma: &[F],
) -> Vec<F> {
    let ratio = (compp / comp).sqrt();
    posterior_coefficients(a, comp, c, sigma)
        .into_iter()
        .map(|k| ap.sqrt() * k + ratio * (F::one() - a.sqrt() * k))
        .collect()
}

/// Closed-form per-bin variance at `t = 0` of DDIM with the analytic
/// linear denoiser, starting from `v_T = Σ`.
pub fn variance_recurrence_oracle<F: Real>(
    p: &ForwardProcess<F>,
    c: &VarianceProfile<F>,
    schedule: &MixingSchedule<F>,
    t_inference: usize,
) -> Result<Vec<F>> {
    let grid = inference_grid(schedule.steps(), t_inference)?;
    let mut v = p.sigma().to_vec();
    for k in (0..t_inference).rev() {
        let m = step_multipliers(schedule.at(grid[k + 1])?, schedule.at(grid[k])?, c.values(), p.sigma());
        for (vi, ai) in v.iter_mut().zip(m) {
            *vi *= ai * ai;
        }
    }
    Ok(v)
}

/// `ε̂ = (y_t − √ᾱ_t ŷ_0) / √(1−ᾱ_t)`.
pub fn predicted_noise<F: Real>(y_t: &NoisyState<F>, y0_hat: &Spectrum<F>, schedule: &MixingSchedule<F>) -> Result<Spectrum<F>> {
    let (a, comp) = schedule.at(y_t.t)?;
    if comp == F::zero() {
        return Err(Error::InfiniteSnr { t: y_t.t });
    }
    let s = F::one() / comp.sqrt();
    y_t.y.axpby(s, y0_hat, -a.sqrt() * s)
}

/// dB value reported for an infinite proxy SNR.
pub const SNR_DB_CAP: f64 = 100.0;

/// Accumulates `ŷ_0` and `ε̂` across a sample set at one step.
#[derive(Debug, Clone)]
pub struct ReverseSnrAccumulator {
    y0: BinVariance,
    eps: BinVariance,
}

impl ReverseSnrAccumulator {
    pub fn new(d: usize) -> Self {
        ReverseSnrAccumulator {
            y0: BinVariance::new(d),
            eps: BinVariance::new(d),
        }
    }

    pub fn push<F: Real>(&mut self, y0_hat: &Spectrum<F>, eps_hat: &Spectrum<F>) {
        self.y0.push(y0_hat);
        self.eps.push(eps_hat);
    }

    /// Per-bin `√ᾱ_prev Var[ŷ_0] / (√(1−ᾱ_prev) Var[ε̂])`; `+∞` when
    /// `ᾱ_prev = 1`, zero when predictions are constant.
    pub fn finish<F: Real>(&self, schedule: &MixingSchedule<F>, t_prev: usize) -> Result<Vec<f64>> {
        if self.y0.count() < 2 {
            return Err(Error::DatasetTooSmall {
                need: 2,
                got: self.y0.count(),
            });
        }
        let (ap, compp) = schedule.at(t_prev)?;
        let (ap, compp) = (ap.as_f64(), compp.as_f64());
        Ok(self
            .y0
            .variance()
            .into_iter()
            .zip(self.eps.variance())
            .map(|(vy, ve)| {
                let num = ap.sqrt() * vy;
                if num == 0.0 {
                    0.0
                } else {
                    let den = compp.sqrt() * ve;
                    if den == 0.0 {
                        f64::INFINITY
                    } else {
                        num / den
                    }
                }
            })
            .collect())
    }
}

/// Reverse-SNR proxy over paired predictions at step `t`.
pub fn reverse_snr_proxy<F: Real>(
    y0_hat: &[Spectrum<F>],
    eps_hat: &[Spectrum<F>],
    schedule: &MixingSchedule<F>,
    t_prev: usize,
) -> Result<Vec<f64>> {
    let d = y0_hat.first().map_or(0, |s| s.len());
    let mut acc = ReverseSnrAccumulator::new(d);
    for (a, b) in y0_hat.iter().zip(eps_hat) {
        acc.push(a, b);
    }
    acc.finish(schedule, t_prev)
}

/// dB with `+∞` capped at [`SNR_DB_CAP`].
pub fn snr_db_capped(v: f64) -> f64 {
    if v.is_infinite() && v > 0.0 {
        SNR_DB_CAP
    } else {
        (10.0 * v.log10()).min(SNR_DB_CAP)
    }
}
