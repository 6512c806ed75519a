//! Denoisers: the analytic Gaussian posterior mean, a per-bin linear model,
//! and a small pixel-space MLP, all trained by the same C-weighted loop.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::process::{ForwardProcess, ProcessKind};
use crate::rng::normal;
use crate::scalar::Real;
use crate::schedule::VarianceProfile;
use crate::spectral::{RealField, Shape, SpectralPlan, Spectrum};

/// Predicts the clean spectrum `ŷ_0` from a noisy one.
pub trait Denoiser<F: Real> {
    fn predict(&self, y_t: &Spectrum<F>, t: usize) -> Result<Spectrum<F>>;
}

/// Bayes posterior mean under a zero-mean Gaussian prior with variance `C`.
#[derive(Debug, Clone)]
pub struct LinearGaussianDenoiser<F> {
    process: ForwardProcess<F>,
}

impl<F: Real> LinearGaussianDenoiser<F> {
    pub fn new(process: ForwardProcess<F>) -> Self {
        LinearGaussianDenoiser { process }
    }

    pub fn process(&self) -> &ForwardProcess<F> {
        &self.process
    }

    /// Per-bin coefficient `√ᾱ C / (ᾱ C + (1−ᾱ) Σ)` at step `t`.
    pub fn coefficients(&self, t: usize) -> Result<Vec<F>> {
        let (a, comp) = self.process.schedule().at(t)?;
        Ok(posterior_coefficients(a, comp, self.process.c().values(), self.process.sigma()))
    }
}

/// Linear posterior-mean coefficients for mixing pair `(ᾱ, 1−ᾱ)`.
pub fn posterior_coefficients<F: Real>(a: F, comp: F, c: &[F], sigma: &[F]) -> Vec<F> {
    let sa = a.sqrt();
    c.iter()
        .zip(sigma)
        .map(|(&ci, &si)| {
            let den = a * ci + comp * si;
            if den > F::zero() {
                sa * ci / den
            } else {
                F::zero()
            }
        })
        .collect()
}

pub fn analytic_predict<F: Real>(
    d: &LinearGaussianDenoiser<F>,
    y_t: &Spectrum<F>,
    t: usize,
) -> Result<Spectrum<F>> {
    if y_t.shape() != d.process.shape() {
        return Err(Error::ShapeMismatch {
            expected: d.process.shape().dims().to_vec(),
            got: y_t.shape().dims().to_vec(),
        });
    }
    Ok(y_t.scale_bins(&d.coefficients(t)?))
}

impl<F: Real> Denoiser<F> for LinearGaussianDenoiser<F> {
    fn predict(&self, y_t: &Spectrum<F>, t: usize) -> Result<Spectrum<F>> {
        analytic_predict(self, y_t, t)
    }
}

/// `Σ_i |y0_i − ŷ0_i|² / C_i`.
pub fn weighted_loss<F: Real>(y0: &Spectrum<F>, y0_hat: &Spectrum<F>, c: &VarianceProfile<F>) -> Result<F> {
    for s in [y0, y0_hat] {
        if s.shape() != c.shape() {
            return Err(Error::ShapeMismatch {
                expected: c.shape().dims().to_vec(),
                got: s.shape().dims().to_vec(),
            });
        }
    }
    Ok(y0
        .data()
        .iter()
        .zip(y0_hat.data())
        .zip(c.values())
        .map(|((a, b), &ci)| (a - b).norm_sqr() / ci)
        .sum())
}

/// Dimension of the sinusoidal time embedding.
pub const TIME_EMBED: usize = 16;

/// `[sin(π 2^k τ), cos(π 2^k τ)]` for `k = 0..8`, with `τ = t/T`.
pub fn time_embedding<F: Real>(t: usize, steps: usize) -> [F; TIME_EMBED] {
    let tau = t as f64 / steps.max(1) as f64;
    let mut out = [F::zero(); TIME_EMBED];
    for k in 0..TIME_EMBED / 2 {
        let w = std::f64::consts::PI * f64::from(1u32 << k);
        out[2 * k] = F::lit((w * tau).sin());
        out[2 * k + 1] = F::lit((w * tau).cos());
    }
    out
}

/// Two tanh hidden layers over flattened pixels plus the time embedding.
///
/// Parameters live in one flat vector laid out as `W1, b1, W2, b2, W3, b3`
/// with row-major weight matrices (`W1` is `hidden × (d + 16)`).
pub struct MlpDenoiser<F: Real> {
    shape: Shape,
    hidden: usize,
    steps: usize,
    params: Vec<F>,
    plan: SpectralPlan<F>,
}

impl<F: Real> Clone for MlpDenoiser<F> {
    fn clone(&self) -> Self {
        MlpDenoiser {
            shape: self.shape.clone(),
            hidden: self.hidden,
            steps: self.steps,
            params: self.params.clone(),
            plan: SpectralPlan::new(&self.shape),
        }
    }
}

impl<F: Real> std::fmt::Debug for MlpDenoiser<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MlpDenoiser")
            .field("shape", &self.shape)
            .field("hidden", &self.hidden)
            .field("steps", &self.steps)
            .field("params", &self.params.len())
            .finish()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    inp: usize,
    h: usize,
}

impl Layout {
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.h * self.inp
    }
    fn w2(&self) -> usize {
        self.b1() + self.h
    }
    fn b2(&self) -> usize {
        self.w2() + self.h * self.h
    }
    fn w3(&self) -> usize {
        self.b2() + self.h
    }
    fn b3(&self) -> usize {
        self.w3() + self.d * self.h
    }
    fn total(&self) -> usize {
        self.b3() + self.d
    }
}

/// Activations kept for the backward pass.
struct Tape<F> {
    input: Vec<F>,
    h1: Vec<F>,
    h2: Vec<F>,
    out: Vec<F>,
}

impl<F: Real> MlpDenoiser<F> {
    pub fn parameter_count(shape: &Shape, hidden: usize) -> usize {
        let d = shape.len();
        Layout {
            d,
            inp: d + TIME_EMBED,
            h: hidden,
        }
        .total()
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(shape: Shape, hidden: usize, steps: usize, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(shape, hidden, steps)?;
        let l = m.layout();
        let mut init = |start: usize, count: usize, fan_in: usize| {
            let s = F::one() / F::from_usize_lossy(fan_in).sqrt();
            for p in &mut m.params[start..start + count] {
                *p = s * normal::<F, _>(rng);
            }
        };
        init(l.w1(), l.h * l.inp, l.inp);
        init(l.w2(), l.h * l.h, l.h);
        init(l.w3(), l.d * l.h, l.h);
        Ok(m)
    }

    pub fn zeros(shape: Shape, hidden: usize, steps: usize) -> Result<Self> {
        if hidden == 0 || steps == 0 {
            return Err(Error::InvalidArgument("hidden width and T must be positive".into()));
        }
        let n = Self::parameter_count(&shape, hidden);
        Ok(MlpDenoiser {
            plan: SpectralPlan::new(&shape),
            shape,
            hidden,
            steps,
            params: vec![F::zero(); n],
        })
    }

    pub fn from_params(shape: Shape, hidden: usize, steps: usize, params: Vec<F>) -> Result<Self> {
        let mut m = Self::zeros(shape, hidden, steps)?;
        if params.len() != m.params.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        m.params = params;
        Ok(m)
    }

    fn layout(&self) -> Layout {
        let d = self.shape.len();
        Layout {
            d,
            inp: d + TIME_EMBED,
            h: self.hidden,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Output-layer bias `b3`.
    pub fn output_bias_mut(&mut self) -> &mut [F] {
        let l = self.layout();
        &mut self.params[l.b3()..l.total()]
    }

    fn dense(w: &[F], b: &[F], x: &[F], out: &mut Vec<F>) {
        let n_in = x.len();
        out.clear();
        out.extend(b.iter().enumerate().map(|(r, &bias)| {
            let row = &w[r * n_in..(r + 1) * n_in];
            row.iter().zip(x).fold(bias, |acc, (&wi, &xi)| acc + wi * xi)
        }));
    }

    fn forward_tape(&self, x: &[F], t: usize) -> Tape<F> {
        let l = self.layout();
        let p = &self.params;
        let mut input = Vec::with_capacity(l.inp);
        input.extend_from_slice(x);
        input.extend_from_slice(&time_embedding::<F>(t, self.steps));
        let mut h1 = Vec::new();
        Self::dense(&p[l.w1()..l.b1()], &p[l.b1()..l.w2()], &input, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut h2 = Vec::new();
        Self::dense(&p[l.w2()..l.b2()], &p[l.b2()..l.w3()], &h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = Vec::new();
        Self::dense(&p[l.w3()..l.b3()], &p[l.b3()..l.total()], &h2, &mut out);
        Tape { input, h1, h2, out }
    }

    /// Pixel-space forward pass `f_θ(x_t, t)`.
    pub fn mlp_predict(&self, x_t: &RealField<F>, t: usize) -> Result<RealField<F>> {
        if x_t.shape() != &self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.dims().to_vec(),
                got: x_t.shape().dims().to_vec(),
            });
        }
        let tape = self.forward_tape(x_t.data(), t);
        RealField::new(tape.out, self.shape.clone())
    }

    /// Accumulates `grad += ∂L/∂θ` given `∂L/∂out`.
    fn backward(&self, tape: &Tape<F>, g_out: &[F], grad: &mut [F]) {
        let l = self.layout();
        let p = &self.params;
        let one = F::one();
        // output layer
        let mut g_h2 = vec![F::zero(); l.h];
        for (r, &go) in g_out.iter().enumerate() {
            grad[l.b3() + r] += go;
            let row = l.w3() + r * l.h;
            for c in 0..l.h {
                grad[row + c] += go * tape.h2[c];
                g_h2[c] += go * p[row + c];
            }
        }
        let g_z2: Vec<F> = g_h2.iter().zip(&tape.h2).map(|(&g, &h)| g * (one - h * h)).collect();
        let mut g_h1 = vec![F::zero(); l.h];
        for (r, &gz) in g_z2.iter().enumerate() {
            grad[l.b2() + r] += gz;
            let row = l.w2() + r * l.h;
            for c in 0..l.h {
                grad[row + c] += gz * tape.h1[c];
                g_h1[c] += gz * p[row + c];
            }
        }
        for (r, (&g, &h)) in g_h1.iter().zip(&tape.h1).enumerate() {
            let gz = g * (one - h * h);
            grad[l.b1() + r] += gz;
            let row = l.w1() + r * l.inp;
            for (c, &x) in tape.input.iter().enumerate() {
                grad[row + c] += gz * x;
            }
        }
    }

    /// Loss `weighted_loss(y0, F(f_θ(x_t, t)), C)` and its exact gradient.
    ///
    /// With `r = y0 − F(out)` the output gradient is `−2 Re F⁻¹(r / C)`:
    /// the unitary DFT's adjoint is its inverse.
    pub fn backprop_grads(
        &self,
        x_t: &RealField<F>,
        t: usize,
        y0: &Spectrum<F>,
        c: &VarianceProfile<F>,
    ) -> Result<(F, Vec<F>)> {
        let mut grad = vec![F::zero(); self.params.len()];
        let loss = self.accumulate_grads(x_t, t, y0, c, &mut grad)?;
        Ok((loss, grad))
    }

    fn accumulate_grads(
        &self,
        x_t: &RealField<F>,
        t: usize,
        y0: &Spectrum<F>,
        c: &VarianceProfile<F>,
        grad: &mut [F],
    ) -> Result<F> {
        if x_t.shape() != &self.shape || y0.shape() != &self.shape || c.shape() != &self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.dims().to_vec(),
                got: x_t.shape().dims().to_vec(),
            });
        }
        let tape = self.forward_tape(x_t.data(), t);
        let mut buf: Vec<Complex<F>> = tape.out.iter().map(|&v| Complex::new(v, F::zero())).collect();
        self.plan.forward_complex(&mut buf);
        let mut loss = F::zero();
        for ((z, &target), &ci) in buf.iter_mut().zip(y0.data()).zip(c.values()) {
            let r = target - *z;
            loss += r.norm_sqr() / ci;
            *z = r.unscale(ci);
        }
        self.plan.inverse_complex(&mut buf);
        let two = F::lit(2.0);
        let g_out: Vec<F> = buf.iter().map(|z| -two * z.re).collect();
        self.backward(&tape, &g_out, grad);
        Ok(loss)
    }
}

impl<F: Real> Denoiser<F> for MlpDenoiser<F> {
    fn predict(&self, y_t: &Spectrum<F>, t: usize) -> Result<Spectrum<F>> {
        let x = self.plan.inverse(y_t)?;
        let out = self.mlp_predict(&x, t)?;
        self.plan.forward(&out)
    }
}

/// Independent per-`(t, bin)` real coefficients: `ŷ_0,i = k_{t,i} · y_t,i`.
/// Its optimum is the analytic posterior-mean coefficient.
#[derive(Debug, Clone)]
pub struct DiagonalLinearDenoiser<F> {
    d: usize,
    steps: usize,
    /// `(T+1) × d`, row `t` holds the step-`t` coefficients.
    coef: Vec<F>,
}

impl<F: Real> DiagonalLinearDenoiser<F> {
    pub fn new(d: usize, steps: usize, init: F) -> Self {
        DiagonalLinearDenoiser {
            d,
            steps,
            coef: vec![init; (steps + 1) * d],
        }
    }

    pub fn coefficients(&self, t: usize) -> &[F] {
        &self.coef[t * self.d..(t + 1) * self.d]
    }
}

impl<F: Real> Denoiser<F> for DiagonalLinearDenoiser<F> {
    fn predict(&self, y_t: &Spectrum<F>, t: usize) -> Result<Spectrum<F>> {
        if t > self.steps {
            return Err(Error::TimestepOutOfRange { t, max: self.steps });
        }
        Ok(y_t.scale_bins(self.coefficients(t)))
    }
}

/// A model the training loop can update.
pub trait Trainable<F: Real> {
    fn params(&self) -> &[F];
    fn params_mut(&mut self) -> &mut [F];
    /// Adds the gradient of the C-weighted loss for one example into `grad`
    /// and returns the loss. `x_t` is the pixel-space view of `y_t`.
    fn accumulate(
        &self,
        y_t: &Spectrum<F>,
        x_t: &RealField<F>,
        t: usize,
        y0: &Spectrum<F>,
        c: &VarianceProfile<F>,
        grad: &mut [F],
    ) -> Result<F>;
}

impl<F: Real> Trainable<F> for MlpDenoiser<F> {
    fn params(&self) -> &[F] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }
    fn accumulate(
        &self,
        _y_t: &Spectrum<F>,
        x_t: &RealField<F>,
        t: usize,
        y0: &Spectrum<F>,
        c: &VarianceProfile<F>,
        grad: &mut [F],
    ) -> Result<F> {
        self.accumulate_grads(x_t, t, y0, c, grad)
    }
}

impl<F: Real> Trainable<F> for DiagonalLinearDenoiser<F> {
    fn params(&self) -> &[F] {
        &self.coef
    }
    fn params_mut(&mut self) -> &mut [F] {
        &mut self.coef
    }
    fn accumulate(
        &self,
        y_t: &Spectrum<F>,
        _x_t: &RealField<F>,
        t: usize,
        y0: &Spectrum<F>,
        c: &VarianceProfile<F>,
        grad: &mut [F],
    ) -> Result<F> {
        let k = self.coefficients(t);
        let g = &mut grad[t * self.d..(t + 1) * self.d];
        let two = F::lit(2.0);
        let mut loss = F::zero();
        for i in 0..self.d {
            let (y, target, ci) = (y_t.data()[i], y0.data()[i], c.values()[i]);
            let r = target - y.scale(k[i]);
            loss += r.norm_sqr() / ci;
            g[i] -= two * (r.re * y.re + r.im * y.im) / ci;
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig<F> {
    /// Number of SGD updates `M`.
    pub steps: usize,
    pub learning_rate: F,
    pub batch_size: usize,
    pub seed: u64,
    /// Momentum coefficient; zero gives plain SGD.
    pub momentum: F,
}

impl<F: Real> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            learning_rate: F::lit(1e-3),
            batch_size: 1,
            seed: 0,
            momentum: F::zero(),
        }
    }
}

/// Consecutive over-threshold steps that trigger the divergence guard.
pub const DIVERGENCE_PATIENCE: usize = 100;
/// Loss multiple of the initial loss considered divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Algorithm-1 training: per example draw `x_0`, `t ~ U{1..T}` and `ε_Σ`,
/// form `y_t`, and step on the mean C-weighted loss of the batch.
/// Returns the per-step mean batch loss.
pub fn train<F: Real, M: Trainable<F>>(
    model: &mut M,
    data: &[RealField<F>],
    p: &ForwardProcess<F>,
    cfg: &TrainConfig<F>,
) -> Result<Vec<F>> {
    if data.is_empty() {
        return Err(Error::DatasetTooSmall { need: 1, got: 0 });
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > F::zero()) {
        return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
    }
    let plan = SpectralPlan::new(p.shape());
    let clean: Vec<Spectrum<F>> = data.iter().map(|x| plan.forward(x)).collect::<Result<_>>()?;
    let mut rng = crate::rng::seeded(cfg.seed);
    let n = model.params().len();
    let mut grad = vec![F::zero(); n];
    let mut velocity = vec![F::zero(); n];
    let inv_batch = F::one() / F::from_usize_lossy(cfg.batch_size);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut initial: Option<F> = None;
    let mut over = 0usize;
    let steps_t = p.steps();
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = F::zero());
        let mut loss = F::zero();
        for _ in 0..cfg.batch_size {
            let y0 = &clean[rng.random_range(0..clean.len())];
            let t = rng.random_range(1..=steps_t);
            let (a, comp) = p.schedule().at(t)?;
            let eps = p.sample_noise(&mut rng);
            let y_t = y0.axpby(a.sqrt(), &eps, comp.sqrt())?;
            let x_t = plan.inverse_real_part(&y_t)?;
            loss += model.accumulate(&y_t, &x_t, t, y0, p.c(), &mut grad)?;
        }
        loss *= inv_batch;
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence {
                step,
                loss: loss.as_f64(),
            });
        }
        let base = *initial.get_or_insert(loss);
        if loss > base * F::lit(DIVERGENCE_FACTOR) {
            over += 1;
            if over >= DIVERGENCE_PATIENCE {
                return Err(Error::TrainingDivergence {
                    step,
                    loss: loss.as_f64(),
                });
            }
        } else {
            over = 0;
        }
        let lr = cfg.learning_rate * inv_batch;
        for ((w, v), &g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v + g;
            *w -= lr * *v;
        }
        trace.push(loss);
    }
    Ok(trace)
}

/// Process kind tag used by checkpoints.
pub fn kind_tag<F: Real>(kind: ProcessKind<F>) -> u8 {
    match kind {
        ProcessKind::Ddpm => 0,
        ProcessKind::EqualSnr { .. } => 1,
        ProcessKind::FlippedSnr => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::schedule::{make_schedule, MixingSchedule, ScheduleKind};
    use crate::spectral::forward_transform;

    fn unit_process(alphabar: f64) -> ForwardProcess<f64> {
        let sched = MixingSchedule::custom(&[alphabar]).unwrap();
        let c = VarianceProfile::new(vec![1.0; 4], Shape::d1(4)).unwrap();
        ForwardProcess::new(ProcessKind::Ddpm, sched, c).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let d = LinearGaussianDenoiser::new(unit_process(0.5));
        for k in d.coefficients(1).unwrap() {
            assert!((k - 0.5f64.sqrt()).abs() < 1e-15);
        }
        assert!(d.coefficients(0).unwrap().iter().all(|&k| k == 1.0));
        let c = [2.0, 3.0];
        let s = [1.0, 5.0];
        assert_eq!(posterior_coefficients(0.0, 1.0, &c, &s), vec![0.0, 0.0]);
    }

    #[test]
    fn loss_examples() {
        let shape = Shape::d1(1);
        let c = VarianceProfile::new(vec![4.0], shape.clone()).unwrap();
        let a = Spectrum::new(vec![Complex::new(0.0, 0.0)], shape.clone()).unwrap();
        let b = Spectrum::new(vec![Complex::new(0.0, 2.0)], shape.clone()).unwrap();
        assert_eq!(weighted_loss(&a, &b, &c).unwrap(), 1.0);
        assert_eq!(weighted_loss(&a, &a, &c).unwrap(), 0.0);
        let c1 = VarianceProfile::new(vec![1.0, 1.0], Shape::d1(2)).unwrap();
        let e = Spectrum::new(vec![Complex::new(1.0, 2.0), Complex::new(-3.0, 0.5)], Shape::d1(2)).unwrap();
        let z = Spectrum::zeros(Shape::d1(2));
        assert_eq!(weighted_loss(&e, &z, &c1).unwrap(), e.norm_sqr());
    }

    #[test]
    fn zero_weights_give_bias() {
        let shape = Shape::d2(2, 3);
        let mut m = MlpDenoiser::<f64>::zeros(shape.clone(), 5, 10).unwrap();
        m.output_bias_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = RealField::new(vec![0.7; 6], shape).unwrap();
        assert_eq!(m.mlp_predict(&x, 3).unwrap().data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn forward_is_deterministic_and_bounded() {
        let shape = Shape::d2(4, 4);
        let a = MlpDenoiser::<f64>::new(shape.clone(), 8, 10, &mut seeded(4)).unwrap();
        let b = MlpDenoiser::<f64>::new(shape.clone(), 8, 10, &mut seeded(4)).unwrap();
        let x = RealField::new((0..16).map(|i| 1e3 * (i as f64 - 8.0) / 8.0).collect(), shape).unwrap();
        let ya = a.mlp_predict(&x, 7).unwrap();
        let yb = b.mlp_predict(&x, 7).unwrap();
        assert_eq!(
            ya.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            yb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(ya.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_zero_at_exact_prediction() {
        let shape = Shape::d2(3, 3);
        let m = MlpDenoiser::<f64>::new(shape.clone(), 6, 5, &mut seeded(2)).unwrap();
        let x = RealField::new((0..9).map(|i| (i as f64).sin()).collect(), shape.clone()).unwrap();
        let y0 = forward_transform(&m.mlp_predict(&x, 2).unwrap()).unwrap();
        let c = VarianceProfile::new(vec![0.5; 9], shape).unwrap();
        let (loss, g) = m.backprop_grads(&x, 2, &y0, &c).unwrap();
        assert!(loss < 1e-28);
        assert!(g.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn one_pixel_output_bias_gradient() {
        // with one pixel the DFT is the identity, so ∂L/∂b3 = −2 (y0 − out) / C
        let shape = Shape::d1(1);
        let m = MlpDenoiser::<f64>::new(shape.clone(), 3, 4, &mut seeded(8)).unwrap();
        let x = RealField::new(vec![0.4], shape.clone()).unwrap();
        let out = m.mlp_predict(&x, 1).unwrap().data()[0];
        let y0 = Spectrum::new(vec![Complex::new(1.5, 0.0)], shape.clone()).unwrap();
        let c = VarianceProfile::new(vec![2.5], shape).unwrap();
        let (_, g) = m.backprop_grads(&x, 1, &y0, &c).unwrap();
        let expect = -2.0 * (1.5 - out) / 2.5;
        assert!((g[g.len() - 1] - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_steps_leave_parameters() {
        let shape = Shape::d1(4);
        let sched = make_schedule(ScheduleKind::Cosine, 10).unwrap();
        let c = VarianceProfile::new(vec![1.0; 4], shape.clone()).unwrap();
        let p = ForwardProcess::new(ProcessKind::Ddpm, sched, c).unwrap();
        let mut m = MlpDenoiser::<f64>::new(shape.clone(), 4, 10, &mut seeded(1)).unwrap();
        let before = m.params().to_vec();
        let data = vec![RealField::new(vec![0.1, 0.2, 0.3, 0.4], shape).unwrap()];
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let trace = train(&mut m, &data, &p, &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(m.params(), &before[..]);
    }

    #[test]
    fn training_is_deterministic() {
        let shape = Shape::d1(4);
        let sched = make_schedule(ScheduleKind::Cosine, 10).unwrap();
        let c = VarianceProfile::new(vec![1.0; 4], shape.clone()).unwrap();
        let p = ForwardProcess::new(ProcessKind::Ddpm, sched, c).unwrap();
        let data = vec![RealField::new(vec![0.1, -0.2, 0.3, 0.4], shape.clone()).unwrap()];
        let cfg = TrainConfig {
            steps: 50,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = MlpDenoiser::<f64>::new(shape.clone(), 4, 10, &mut seeded(1)).unwrap();
            let trace = train(&mut m, &data, &p, &cfg).unwrap();
            (trace, m.params().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_guard_trips() {
        let shape = Shape::d1(2);
        let sched = make_schedule(ScheduleKind::Cosine, 10).unwrap();
        let c = VarianceProfile::new(vec![1.0; 2], shape.clone()).unwrap();
        let p = ForwardProcess::new(ProcessKind::Ddpm, sched, c).unwrap();
        let data = vec![RealField::new(vec![1.0, -1.0], shape.clone()).unwrap()];
        let mut m = DiagonalLinearDenoiser::new(2, 10, 0.0);
        let cfg = TrainConfig {
            steps: 5000,
            learning_rate: 50.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut m, &data, &p, &cfg),
            Err(Error::TrainingDivergence { .. })
        ));
    }
}
