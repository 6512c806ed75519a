//! Normality diagnostics for the reverse process.
//!
//! One-dimensional densities live on uniform grids and every integral is a
//! trapezoid sum. These routines are `f64` only.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::process::{forward_marginal_sample, ForwardProcess};
use crate::spectral::{frequency_order, RealField, SpectralPlan, Spectrum};

/// Grid size for KDE estimates.
pub const KDE_POINTS: usize = 1024;
/// Half-width of the KDE grid in sample standard deviations.
pub const KDE_SPAN_SIGMAS: f64 = 4.0;
/// Minimum sample count for a KDE.
pub const KDE_MIN_SAMPLES: usize = 1000;
/// Quantile of `q(y_{t−1})` used as the conditioning point.
pub const CONDITIONING_QUANTILE: f64 = 0.7;

fn trapz(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dx * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Density sampled on a uniform grid, normalized by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    start: f64,
    dx: f64,
    mass: Vec<f64>,
}

impl Density1D {
    /// Normalizes `mass` on the grid `start + i·dx`.
    pub fn new(start: f64, dx: f64, mass: Vec<f64>) -> Result<Self> {
        if mass.len() < 2 || !(dx > 0.0) || !start.is_finite() {
            return Err(Error::InvalidInput("density grid needs >= 2 points and dx > 0".into()));
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("density values must be finite and >= 0".into()));
        }
        let z = trapz(&mass, dx);
        if !(z > 0.0) {
            return Err(Error::Degenerate("density integrates to zero".into()));
        }
        Ok(Density1D {
            start,
            dx,
            mass: mass.into_iter().map(|m| m / z).collect(),
        })
    }

    /// Tabulates `f` on `n` points spanning `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) || n < 2 {
            return Err(Error::InvalidArgument("need hi > lo and n >= 2".into()));
        }
        let dx = (hi - lo) / (n - 1) as f64;
        Self::new(lo, dx, (0..n).map(|i| f(lo + i as f64 * dx)).collect())
    }

    pub fn x(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dx
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.mass.len()).map(|i| self.x(i)).collect()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let v: Vec<f64> = (0..self.mass.len()).map(|i| f(self.x(i), self.mass[i])).collect();
        trapz(&v, self.dx)
    }

    pub fn total(&self) -> f64 {
        trapz(&self.mass, self.dx)
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x, m| x * m)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.integrate(|x, m| (x - mu).powi(2) * m)
    }

    /// Probability mass on `x > threshold` (trapezoid on the covering cells).
    pub fn mass_above(&self, threshold: f64) -> f64 {
        self.integrate(|x, m| if x > threshold { m } else { 0.0 })
    }
}

fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Spread below this fraction of the location is rounding noise.
const DEGENERATE_REL: f64 = 1e-12;

fn is_degenerate(mean: f64, sd: f64) -> bool {
    !(sd > DEGENERATE_REL * mean.abs().max(f64::MIN_POSITIVE))
}

/// Linear-interpolated empirical quantile of sorted samples.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(σ, IQR/1.34) n^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let (mean, sd) = mean_std(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if is_degenerate(mean, spread) {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate that can be evaluated on any grid.
#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
    mean: f64,
    sd: f64,
}

impl Kde {
    pub fn new(samples: &[f64], bandwidth: f64) -> Result<Self> {
        if samples.len() < KDE_MIN_SAMPLES {
            return Err(Error::DatasetTooSmall {
                need: KDE_MIN_SAMPLES,
                got: samples.len(),
            });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        let (mean, sd) = mean_std(samples);
        if is_degenerate(mean, sd) {
            return Err(Error::Degenerate("all samples equal; a KDE would be a delta".into()));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Kde {
            sorted,
            bandwidth,
            mean,
            sd,
        })
    }

    pub fn silverman(samples: &[f64]) -> Result<Self> {
        if samples.len() < KDE_MIN_SAMPLES {
            return Err(Error::DatasetTooSmall {
                need: KDE_MIN_SAMPLES,
                got: samples.len(),
            });
        }
        let h = silverman_bandwidth(samples)?;
        Self::new(samples, h)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Unnormalized density at `x` (kernel sum truncated at 9 bandwidths).
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&s| s < x - 9.0 * h);
        let hi = self.sorted.partition_point(|&s| s <= x + 9.0 * h);
        let inv = 1.0 / (h * h);
        let sum: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&s| (-0.5 * (x - s) * (x - s) * inv).exp())
            .sum();
        sum / (self.sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn density(&self, lo: f64, hi: f64, n: usize) -> Result<Density1D> {
        Density1D::from_fn(lo, hi, n, |x| self.eval(x))
    }

    /// Estimate on the default grid: `KDE_POINTS` points over `mean ± 4σ`.
    pub fn default_density(&self) -> Result<Density1D> {
        let w = KDE_SPAN_SIGMAS * self.sd;
        self.density(self.mean - w, self.mean + w, KDE_POINTS)
    }
}

/// KDE with Silverman bandwidth on `KDE_POINTS` points spanning `±4σ`.
pub fn marginal_estimate(samples: &[f64]) -> Result<Density1D> {
    Kde::silverman(samples)?.default_density()
}

/// `posterior(x) ∝ prior(x) · exp(−(y − scale·x)² / (2 noise_variance))`.
pub fn bayes_posterior_1d(prior: &Density1D, noise_variance: f64, observed: f64, scale: f64) -> Result<Density1D> {
    if !(noise_variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    let mass: Vec<f64> = (0..prior.len())
        .map(|i| {
            let r = observed - scale * prior.x(i);
            prior.mass[i] * (-0.5 * r * r / noise_variance).exp()
        })
        .collect();
    if !(trapz(&mass, prior.dx) > 0.0) {
        return Err(Error::Underflow { observed });
    }
    Density1D::new(prior.start, prior.dx, mass)
}

/// `KL(d ‖ N(mean(d), var(d)))`.
pub fn kl_to_moment_matched_gaussian(d: &Density1D) -> f64 {
    let mu = d.mean();
    let sd = d.variance().sqrt();
    d.integrate(|x, m| {
        if m > 0.0 {
            let q = gaussian_pdf(x, mu, sd);
            if q > 0.0 {
                m * (m / q).ln()
            } else {
                // q underflowed where p has mass: contribution is huge but finite in exact arithmetic
                m * (m.ln() + 0.5 * ((x - mu) / sd).powi(2) + (sd * (2.0 * std::f64::consts::PI).sqrt()).ln())
            }
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvFit {
    pub tv: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// `½∫|d − N(μ, σ²)|`, counting Gaussian mass that falls off the grid.
pub fn tv_distance(d: &Density1D, mu: f64, sigma: f64) -> f64 {
    let diff = d.integrate(|x, m| (m - gaussian_pdf(x, mu, sigma)).abs());
    let covered = d.integrate(|x, _| gaussian_pdf(x, mu, sigma));
    (0.5 * (diff + (1.0 - covered).max(0.0))).clamp(0.0, 1.0)
}

const COARSE: usize = 64;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Best-fit Gaussian in TV: 64×64 grid over `(μ, log σ)` followed by
/// alternating golden-section refinement.
pub fn tv_to_best_gaussian(d: &Density1D) -> TvFit {
    let lo = d.x(0);
    let hi = d.x(d.len() - 1);
    let (smin, smax) = (d.dx(), hi - lo);
    let (lsmin, lsmax) = (smin.ln(), smax.ln());
    let mut best = TvFit {
        tv: f64::INFINITY,
        mu: 0.0,
        sigma: 1.0,
    };
    for i in 0..COARSE {
        let mu = lo + (hi - lo) * i as f64 / (COARSE - 1) as f64;
        for j in 0..COARSE {
            let sigma = (lsmin + (lsmax - lsmin) * j as f64 / (COARSE - 1) as f64).exp();
            let tv = tv_distance(d, mu, sigma);
            if tv < best.tv {
                best = TvFit { tv, mu, sigma };
            }
        }
    }
    let dmu = (hi - lo) / (COARSE - 1) as f64;
    let dls = (lsmax - lsmin) / (COARSE - 1) as f64;
    for _ in 0..30 {
        let before = best.tv;
        let (mu, _) = golden_min(best.mu - dmu, best.mu + dmu, |m| tv_distance(d, m, best.sigma), 1e-9 * (hi - lo));
        let tv = tv_distance(d, mu, best.sigma);
        if tv < best.tv {
            best = TvFit { tv, mu, ..best };
        }
        let ls = best.sigma.ln();
        let (ls, _) = golden_min(ls - dls, ls + dls, |l| tv_distance(d, best.mu, l.exp()), 1e-9);
        let tv = tv_distance(d, best.mu, ls.exp());
        if tv < best.tv {
            best = TvFit {
                tv,
                sigma: ls.exp(),
                ..best
            };
        }
        if before - best.tv < 1e-7 {
            break;
        }
    }
    best
}

/// Equal mixture `½N(−1, δ²) + ½N(1, δ²)` observed through additive noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureConfig {
    pub delta: f64,
    pub noise_variance: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            delta: 0.01,
            noise_variance: 4.0,
        }
    }
}

/// Grid size used for the counterexample densities.
pub const MIXTURE_POINTS: usize = 8193;

impl MixtureConfig {
    pub fn new(delta: f64, noise_variance: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() || !(noise_variance > 0.0) {
            return Err(Error::InvalidArgument("delta and noise variance must be positive".into()));
        }
        Ok(MixtureConfig { delta, noise_variance })
    }

    pub fn prior_pdf(&self, x: f64) -> f64 {
        0.5 * (gaussian_pdf(x, -1.0, self.delta) + gaussian_pdf(x, 1.0, self.delta))
    }

    /// Prior tabulated on `±(1 + 12δ)`.
    pub fn prior(&self) -> Result<Density1D> {
        let w = 1.0 + 12.0 * self.delta;
        Density1D::from_fn(-w, w, MIXTURE_POINTS, |x| self.prior_pdf(x))
    }

    pub fn posterior(&self, observed: f64) -> Result<Density1D> {
        bayes_posterior_1d(&self.prior()?, self.noise_variance, observed, 1.0)
    }

    /// Closed-form posterior weight of the `+1` component:
    /// each component's evidence is `N(y; ±1, δ² + noise variance)`.
    pub fn positive_mode_weight(&self, observed: f64) -> f64 {
        let s2 = self.delta * self.delta + self.noise_variance;
        let lp = -(observed - 1.0).powi(2) / (2.0 * s2);
        let lm = -(observed + 1.0).powi(2) / (2.0 * s2);
        1.0 / (1.0 + (lm - lp).exp())
    }
}

/// Counterexample sweep: TV to the best Gaussian of the posterior at `y`.
pub fn counterexample_tv(deltas: &[f64], noise_variance: f64, observed: f64) -> Result<Vec<(f64, TvFit)>> {
    deltas
        .iter()
        .map(|&delta| {
            let cfg = MixtureConfig::new(delta, noise_variance)?;
            Ok((delta, tv_to_best_gaussian(&cfg.posterior(observed)?)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRow {
    pub rank: usize,
    pub bin: usize,
    pub kl: f64,
    pub bandwidth: f64,
}

/// Normality violation of `q(y_{t−1} | y_t)` at selected frequency ranks.
///
/// For each bin: the real parts of `y_{t−1}` over the dataset give a KDE of
/// `q(y_{t−1})`; the observation is `y_t = √ρ_t q₀.₇` where `q₀.₇` is its
/// 70% quantile; Bayes' rule with the Gaussian step kernel gives the
/// posterior, whose KL to its moment-matched Gaussian is reported.
///
/// The KDE bandwidth is Silverman's rule on the lowest selected rank,
/// expressed relative to that bin's standard deviation and reused (scaled
/// by each bin's own deviation) at every other rank. The posterior is
/// tabulated on a grid that covers both the prior's `±4σ` window and `±8`
/// likelihood widths around the observation, whichever is narrower.
pub fn gaussian_violation_report<R: Rng + ?Sized>(
    dataset: &[RealField<f64>],
    p: &ForwardProcess<f64>,
    t: usize,
    ranks: &[usize],
    rng: &mut R,
) -> Result<Vec<ViolationRow>> {
    const MIN_ITEMS: usize = 5000;
    if dataset.len() < MIN_ITEMS {
        return Err(Error::DatasetTooSmall {
            need: MIN_ITEMS,
            got: dataset.len(),
        });
    }
    if t == 0 || t > p.steps() {
        return Err(Error::TimestepOutOfRange { t, max: p.steps() });
    }
    let shape = p.shape();
    let order = frequency_order(shape);
    if let Some(&r) = ranks.iter().find(|&&r| r >= order.len()) {
        return Err(Error::InvalidArgument(format!("rank {r} out of range")));
    }
    let plan = SpectralPlan::new(shape);
    let bins: Vec<usize> = ranks.iter().map(|&r| order.ranks()[r]).collect();
    let mut columns = vec![Vec::with_capacity(dataset.len()); bins.len()];
    for x in dataset {
        let y0: Spectrum<f64> = plan.forward(x)?;
        let prev = forward_marginal_sample(&y0, t - 1, p, rng)?;
        for (col, &j) in columns.iter_mut().zip(&bins) {
            col.push(prev.y.data()[j].re);
        }
    }
    let (rho, one_minus_rho) = p.schedule().retain(t)?;
    let lowest = ranks
        .iter()
        .enumerate()
        .min_by_key(|(_, &r)| r)
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("no ranks selected".into()))?;
    let ref_kde = Kde::silverman(&columns[lowest])?;
    let factor = ref_kde.bandwidth() / ref_kde.sd();

    let mut rows = Vec::with_capacity(bins.len());
    for ((&rank, &j), col) in ranks.iter().zip(&bins).zip(&columns) {
        let (_, sd) = mean_std(col);
        let kde = Kde::new(col, factor * sd)?;
        let q = quantile_sorted(kde.sorted(), CONDITIONING_QUANTILE);
        let observed = rho.sqrt() * q;
        let part = if shape.is_self_conjugate(j) { 1.0 } else { 0.5 };
        let noise_var = one_minus_rho * p.sigma()[j] * part;
        let lik_sd = noise_var.sqrt() / rho.sqrt();
        let w = KDE_SPAN_SIGMAS * kde.sd();
        let lo = (kde.mean() - w).max(q - 8.0 * lik_sd);
        let hi = (kde.mean() + w).min(q + 8.0 * lik_sd);
        let prior = kde.density(lo, hi, KDE_POINTS)?;
        let post = bayes_posterior_1d(&prior, noise_var, observed, rho.sqrt())?;
        rows.push(ViolationRow {
            rank,
            bin: j,
            kl: kl_to_moment_matched_gaussian(&post),
            bandwidth: kde.bandwidth(),
        });
    }
    Ok(rows)
}

/// Circularly-symmetric complex Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGaussianParams {
    pub mean: Vec<Complex<f64>>,
    pub cov: Vec<f64>,
}

impl ComplexGaussianParams {
    pub fn new(mean: Vec<Complex<f64>>, cov: Vec<f64>) -> Result<Self> {
        if mean.len() != cov.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![mean.len()],
                got: vec![cov.len()],
            });
        }
        if cov.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument("complex Gaussian covariance must be positive".into()));
        }
        Ok(ComplexGaussianParams { mean, cov })
    }

    pub fn log_pdf(&self, z: &[Complex<f64>]) -> f64 {
        z.iter()
            .zip(&self.mean)
            .zip(&self.cov)
            .map(|((z, m), &c)| -(std::f64::consts::PI * c).ln() - (z - m).norm_sqr() / c)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex<f64>> {
        self.mean
            .iter()
            .zip(&self.cov)
            .map(|(m, &c)| {
                let s = (0.5 * c).sqrt();
                m + Complex::new(s * crate::rng::normal::<f64, _>(rng), s * crate::rng::normal::<f64, _>(rng))
            })
            .collect()
    }
}

/// `Σ_i [ln(q_i/p_i) + p_i/q_i + |μ_q − μ_p|²/q_i − 1]`.
pub fn kl_complex_gaussian(p: &ComplexGaussianParams, q: &ComplexGaussianParams) -> Result<f64> {
    if p.cov.len() != q.cov.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![p.cov.len()],
            got: vec![q.cov.len()],
        });
    }
    Ok(p.cov
        .iter()
        .zip(&q.cov)
        .zip(p.mean.iter().zip(&q.mean))
        .map(|((&sp, &sq), (mp, mq))| (sq / sp).ln() + sp / sq + (mq - mp).norm_sqr() / sq - 1.0)
        .sum())
}

/// Forward-posterior coefficients at `t ≥ 2`: `q(y_{t−1} | y_t, y_0)` has
/// mean `k0 y_0 + kt y_t` and per-bin variance `v Σ_i`.
pub fn forward_posterior_coefficients(p: &ForwardProcess<f64>, t: usize) -> Result<(f64, f64, f64)> {
    if t == 0 || t > p.steps() {
        return Err(Error::TimestepOutOfRange { t, max: p.steps() });
    }
    let (ap, cp) = p.schedule().at(t - 1)?;
    let (_, c) = p.schedule().at(t)?;
    let (rho, omr) = p.schedule().retain(t)?;
    let k0 = ap.sqrt() * omr / c;
    let kt = rho.sqrt() * cp / c;
    let v = cp * omr / c;
    if !(v > 0.0) {
        return Err(Error::Degenerate(format!(
            "forward posterior at t = {t} is a point mass"
        )));
    }
    Ok((k0, kt, v))
}

/// Posterior-mean map `μ_θ = k0 ŷ_0 + kt y_t`.
pub fn posterior_mean_map(y0_hat: &Spectrum<f64>, y_t: &Spectrum<f64>, p: &ForwardProcess<f64>, t: usize) -> Result<Spectrum<f64>> {
    let (k0, kt, _) = forward_posterior_coefficients(p, t)?;
    y0_hat.axpby(k0, y_t, kt)
}

/// `KL(q(y_{t−1}|y_t, y_0) ‖ p_θ(y_{t−1}|y_t))` with a shared variance:
/// `Σ_i |μ̃_i − μ_θ,i|² / (v Σ_i)`.
pub fn elbo_kl_term(
    y0: &Spectrum<f64>,
    y_t: &Spectrum<f64>,
    mu_theta: &Spectrum<f64>,
    p: &ForwardProcess<f64>,
    t: usize,
) -> Result<f64> {
    let (k0, kt, v) = forward_posterior_coefficients(p, t)?;
    let mu = y0.axpby(k0, y_t, kt)?;
    if mu_theta.shape() != mu.shape() {
        return Err(Error::ShapeMismatch {
            expected: mu.shape().dims().to_vec(),
            got: mu_theta.shape().dims().to_vec(),
        });
    }
    Ok(mu
        .data()
        .iter()
        .zip(mu_theta.data())
        .zip(p.sigma())
        .map(|((a, b), &s)| (a - b).norm_sqr() / (v * s))
        .sum())
}

/// Covariance of a complex vector: diagonal or dense Hermitian (row-major).
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Dense { n: usize, data: Vec<Complex<f64>> },
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(d) => d.len(),
            Covariance::Dense { n, .. } => *n,
        }
    }

    /// `v† A v` (real for Hermitian `A`).
    pub fn quad_form(&self, v: &[Complex<f64>]) -> f64 {
        match self {
            Covariance::Diagonal(d) => v.iter().zip(d).map(|(z, &s)| s * z.norm_sqr()).sum(),
            Covariance::Dense { n, data } => {
                let mut acc = Complex::new(0.0, 0.0);
                for i in 0..*n {
                    let row: Complex<f64> = (0..*n).map(|j| data[i * n + j] * v[j]).sum();
                    acc += v[i].conj() * row;
                }
                acc.re
            }
        }
    }
}

/// `(v† Cov_s v) / (v† Cov_n v)`.
pub fn direction_snr(v: &[Complex<f64>], cov_s: &Covariance, cov_n: &Covariance) -> Result<f64> {
    if cov_s.dim() != v.len() || cov_n.dim() != v.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![v.len()],
            got: vec![cov_s.dim(), cov_n.dim()],
        });
    }
    if v.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let den = cov_n.quad_form(v);
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("noise covariance is not positive along v".into()));
    }
    Ok(cov_s.quad_form(v) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded};

    fn std_normal_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| normal::<f64, _>(&mut rng)).collect()
    }

    #[test]
    fn kde_of_normal_is_close() {
        let d = marginal_estimate(&std_normal_samples(100_000, 1)).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        let kl = d.integrate(|x, m| if m > 0.0 { m * (m / gaussian_pdf(x, 0.0, 1.0)).ln() } else { 0.0 });
        assert!(kl <= 5e-3, "KL {kl}");
    }

    #[test]
    fn degenerate_samples_rejected() {
        assert!(matches!(marginal_estimate(&vec![0.3; 2000]), Err(Error::Degenerate(_))));
        assert!(matches!(marginal_estimate(&[0.0, 1.0]), Err(Error::DatasetTooSmall { .. })));
    }

    #[test]
    fn bimodal_kde_has_two_peaks() {
        let mut rng = seeded(2);
        let s: Vec<f64> = (0..20_000)
            .map(|_| {
                let c = if rng.random::<bool>() { 1.0 } else { -1.0 };
                c + 0.05 * normal::<f64, _>(&mut rng)
            })
            .collect();
        let d = marginal_estimate(&s).unwrap();
        let m = d.mass();
        let peaks: Vec<f64> = (1..m.len() - 1)
            .filter(|&i| m[i] > m[i - 1] && m[i] >= m[i + 1] && m[i] > 0.1)
            .map(|i| d.x(i))
            .collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0] + 1.0).abs() < 0.05 && (peaks[1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn conjugate_posterior() {
        let prior = Density1D::from_fn(-8.0, 8.0, 4001, |x| gaussian_pdf(x, 0.0, 1.0)).unwrap();
        let post = bayes_posterior_1d(&prior, 1.0, 1.0, 1.0).unwrap();
        let s = 0.5f64.sqrt();
        let err = (0..post.len())
            .map(|i| (post.mass()[i] - gaussian_pdf(post.x(i), 0.5, s)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn posterior_underflow() {
        let prior = Density1D::from_fn(-1.0, 1.0, 101, |x| gaussian_pdf(x, 0.0, 0.1)).unwrap();
        assert!(matches!(
            bayes_posterior_1d(&prior, 1e-6, 100.0, 1.0),
            Err(Error::Underflow { .. })
        ));
    }

    #[test]
    fn mixture_posterior_symmetric_at_zero() {
        let cfg = MixtureConfig::new(0.05, 4.0).unwrap();
        let post = cfg.posterior(0.0).unwrap();
        assert!((post.mass_above(0.0) - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn mixture_posterior_weights_at_two() {
        // oracle: Simpson quadrature of the unnormalized posterior, independent grid
        let cfg = MixtureConfig::new(0.05, 4.0).unwrap();
        let post = cfg.posterior(2.0).unwrap();
        let f = |x: f64| cfg.prior_pdf(x) * (-(2.0 - x).powi(2) / 8.0).exp();
        let simpson = |a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * f(a + i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let pos = simpson(0.0, 3.0);
        let neg = simpson(-3.0, 0.0);
        let oracle = pos / (pos + neg);
        assert!((post.mass_above(0.0) - oracle).abs() < 1e-6);
        assert!((cfg.positive_mode_weight(2.0) - oracle).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        let g = Density1D::from_fn(-8.0, 8.0, 2001, |x| gaussian_pdf(x, 0.3, 1.2)).unwrap();
        assert!(kl_to_moment_matched_gaussian(&g).abs() <= 1e-5);
        let u = Density1D::from_fn(0.0, 1.0, 4001, |_| 1.0).unwrap();
        let expect = 0.5 * (2.0 * std::f64::consts::PI / 12.0).ln() + 0.5;
        assert!((kl_to_moment_matched_gaussian(&u) - expect).abs() < 1e-6);
    }

    #[test]
    fn mixture_kl_matches_quadrature() {
        // oracle: KL of ½N(−1,δ²)+½N(1,δ²) against N(0, 1+δ²), integrated by
        // Simpson's rule on an independent grid
        let delta: f64 = 0.05;
        let cfg = MixtureConfig::new(delta, 4.0).unwrap();
        let d = Density1D::from_fn(-1.6, 1.6, 64_001, |x| cfg.prior_pdf(x)).unwrap();
        let s = (1.0 + delta * delta).sqrt();
        let f = |x: f64| {
            let p = cfg.prior_pdf(x);
            if p > 0.0 { p * (p / gaussian_pdf(x, 0.0, s)).ln() } else { 0.0 }
        };
        let n = 200_000;
        let (a, b) = (-1.6, 1.6);
        let h = (b - a) / n as f64;
        let oracle = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(a + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((kl_to_moment_matched_gaussian(&d) - oracle).abs() < 1e-6, "{oracle}");
    }

    #[test]
    fn tv_examples() {
        let g = Density1D::from_fn(-6.0, 6.0, 2001, |x| gaussian_pdf(x, 0.4, 0.9)).unwrap();
        let fit = tv_to_best_gaussian(&g);
        assert!(fit.tv <= 1e-3, "{fit:?}");
        let merged = Density1D::from_fn(-6.0, 6.0, 2001, |x| 0.5 * gaussian_pdf(x, 1.0, 0.7) + 0.5 * gaussian_pdf(x, 1.0, 0.7)).unwrap();
        assert!(tv_to_best_gaussian(&merged).tv <= 1e-3);
        let fit = tv_to_best_gaussian(&MixtureConfig::new(0.01, 4.0).unwrap().posterior(0.0).unwrap());
        assert!(fit.tv >= 0.2 && fit.tv <= 1.0 + 1e-9, "{fit:?}");
    }

    #[test]
    fn complex_kl_examples() {
        let z = Complex::new(0.0, 0.0);
        let p = ComplexGaussianParams::new(vec![z, z], vec![1.0, 1.0]).unwrap();
        assert_eq!(kl_complex_gaussian(&p, &p).unwrap(), 0.0);
        let q = ComplexGaussianParams::new(vec![Complex::new(1.0, 2.0), Complex::new(0.0, -1.0)], vec![1.0, 1.0]).unwrap();
        assert!((kl_complex_gaussian(&p, &q).unwrap() - 6.0).abs() < 1e-15);
        assert!(ComplexGaussianParams::new(vec![z], vec![0.0]).is_err());
    }

    #[test]
    fn direction_snr_examples() {
        let v = [Complex::new(0.3, -1.0), Complex::new(2.0, 0.5)];
        let r = direction_snr(&v, &Covariance::Diagonal(vec![2.0, 2.0]), &Covariance::Diagonal(vec![1.0, 1.0])).unwrap();
        assert!((r - 2.0).abs() < 1e-15);
        let s = Covariance::Diagonal(vec![4.0, 1.0]);
        let n = Covariance::Diagonal(vec![1.0, 1.0]);
        let e1 = [Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)];
        let e2 = [Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)];
        assert_eq!(direction_snr(&e1, &s, &n).unwrap(), 4.0);
        assert_eq!(direction_snr(&e2, &s, &n).unwrap(), 1.0);
        let zero = [Complex::new(0.0, 0.0); 2];
        assert!(direction_snr(&zero, &s, &n).is_err());
    }
}
