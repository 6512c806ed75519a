//! Synthetic datasets, variance-profile estimation and dataset summaries.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::process::BinVariance;
use crate::rng::normal;
use crate::scalar::Real;
use crate::schedule::VarianceProfile;
use crate::spectral::{
    frequency_order, sample_hermitian_noise, BandMask, RealField, Shape, SpectralPlan, Spectrum,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub generator: String,
    pub params: Vec<(String, String)>,
    pub seed: Option<u64>,
}

/// Homogeneously shaped collection of real fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    items: Vec<RealField<F>>,
    meta: DatasetMeta,
}

impl<F: Real> Dataset<F> {
    pub fn new(items: Vec<RealField<F>>, meta: DatasetMeta) -> Result<Self> {
        let first = items.first().ok_or(Error::DatasetTooSmall { need: 1, got: 0 })?;
        if let Some(bad) = items.iter().find(|x| x.shape() != first.shape()) {
            return Err(Error::ShapeMismatch {
                expected: first.shape().dims().to_vec(),
                got: bad.shape().dims().to_vec(),
            });
        }
        Ok(Dataset { items, meta })
    }

    pub fn items(&self) -> &[RealField<F>] {
        &self.items
    }

    pub fn into_items(self) -> Vec<RealField<F>> {
        self.items
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn shape(&self) -> &Shape {
        self.items[0].shape()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn spectra(&self) -> Result<Vec<Spectrum<F>>> {
        let plan = SpectralPlan::new(self.shape());
        self.items.iter().map(|x| plan.forward(x)).collect()
    }
}

fn meta(generator: &str, params: &[(&str, String)]) -> DatasetMeta {
    DatasetMeta {
        generator: generator.into(),
        params: params.iter().map(|(k, v)| ((*k).into(), v.clone())).collect(),
        seed: None,
    }
}

/// Black (`−1`) images with `k ~ U{min..max}` white (`+1`) pixels placed
/// uniformly without replacement.
pub fn gen_dots<F: Real, R: Rng + ?Sized>(
    n: usize,
    h: usize,
    w: usize,
    min_count: usize,
    max_count: usize,
    rng: &mut R,
) -> Result<Dataset<F>> {
    if min_count > max_count {
        return Err(Error::InvalidArgument(format!("min count {min_count} exceeds max {max_count}")));
    }
    if max_count > h * w {
        return Err(Error::InvalidArgument(format!(
            "{max_count} dots do not fit in {h}x{w} pixels"
        )));
    }
    let shape = Shape::new(&[h, w])?;
    let items = (0..n)
        .map(|_| {
            let k = rng.random_range(min_count..=max_count);
            let mut px = vec![-F::one(); h * w];
            for i in rand::seq::index::sample(rng, h * w, k) {
                px[i] = F::one();
            }
            RealField::new(px, shape.clone())
        })
        .collect::<Result<_>>()?;
    Dataset::new(
        items,
        meta(
            "dots",
            &[
                ("h", h.to_string()),
                ("w", w.to_string()),
                ("min", min_count.to_string()),
                ("max", max_count.to_string()),
            ],
        ),
    )
}

/// `C_i = A (1 + dist_i)^{−p}` with `dist` the centered Manhattan distance.
pub fn power_law_profile<F: Real>(shape: &Shape, amplitude: F, exponent: F) -> Result<VarianceProfile<F>> {
    let order = frequency_order(shape);
    let c = order
        .distances()
        .iter()
        .map(|&k| amplitude * (F::one() + F::from_usize_lossy(k)).powf(-exponent))
        .collect();
    VarianceProfile::new(c, shape.clone())
}

/// Zero-mean Gaussian images with diagonal Fourier covariance `C`.
pub fn gen_power_law_gaussian<F: Real, R: Rng + ?Sized>(
    n: usize,
    shape: &Shape,
    amplitude: F,
    exponent: F,
    rng: &mut R,
) -> Result<(Dataset<F>, VarianceProfile<F>)> {
    if !(exponent >= F::zero()) || !(amplitude > F::zero()) {
        return Err(Error::InvalidArgument("need amplitude > 0 and exponent >= 0".into()));
    }
    let c = power_law_profile(shape, amplitude, exponent)?;
    let plan = SpectralPlan::new(shape);
    let items = (0..n)
        .map(|_| plan.inverse(&sample_hermitian_noise(c.values(), shape, rng)?))
        .collect::<Result<_>>()?;
    let ds = Dataset::new(
        items,
        meta(
            "power-law",
            &[
                ("shape", format!("{:?}", shape.dims())),
                ("amplitude", amplitude.to_string()),
                ("exponent", exponent.to_string()),
            ],
        ),
    )?;
    Ok((ds, c))
}

/// Images whose Fourier coefficients are bimodal: every real degree of
/// freedom is `s (±1 + δ z) / √(1 + δ²)` with a fair sign, `z ~ N(0, 1)` and
/// `s` chosen so the bin's total variance is the power-law `C_i`.
pub fn gen_bimodal_spectral<F: Real, R: Rng + ?Sized>(
    n: usize,
    shape: &Shape,
    amplitude: F,
    exponent: F,
    delta: F,
    rng: &mut R,
) -> Result<(Dataset<F>, VarianceProfile<F>)> {
    if !(delta > F::zero()) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let c = power_law_profile(shape, amplitude, exponent)?;
    let plan = SpectralPlan::new(shape);
    let norm = F::one() / (F::one() + delta * delta).sqrt();
    let half = F::lit(0.5);
    let draw = |rng: &mut R| {
        let sign = if rng.random::<bool>() { F::one() } else { -F::one() };
        (sign + delta * normal::<F, _>(rng)) * norm
    };
    let d = shape.len();
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let mut data = vec![Complex::new(F::zero(), F::zero()); d];
        for j in 0..d {
            let p = shape.partner(j);
            if p == j {
                data[j] = Complex::new(c.values()[j].sqrt() * draw(rng), F::zero());
            } else if j < p {
                let s = (c.values()[j] * half).sqrt();
                let z = Complex::new(s * draw(rng), s * draw(rng));
                data[j] = z;
                data[p] = z.conj();
            }
        }
        items.push(plan.inverse(&Spectrum::new(data, shape.clone())?)?);
    }
    let ds = Dataset::new(
        items,
        meta(
            "bimodal-spectral",
            &[
                ("shape", format!("{:?}", shape.dims())),
                ("amplitude", amplitude.to_string()),
                ("exponent", exponent.to_string()),
                ("delta", delta.to_string()),
            ],
        ),
    )?;
    Ok((ds, c))
}

/// Scalars from `½N(−1, δ²) + ½N(1, δ²)`, stored as length-1 fields.
pub fn gen_mixture1d<F: Real, R: Rng + ?Sized>(n: usize, delta: F, rng: &mut R) -> Result<Dataset<F>> {
    if !(delta > F::zero()) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let shape = Shape::d1(1);
    let items = (0..n)
        .map(|_| {
            let sign = if rng.random::<bool>() { F::one() } else { -F::one() };
            RealField::new(vec![sign + delta * normal::<F, _>(rng)], shape.clone())
        })
        .collect::<Result<_>>()?;
    Dataset::new(items, meta("mixture1d", &[("delta", delta.to_string())]))
}

/// Per-bin `Var(Re) + Var(Im)` of the transformed dataset.
pub fn estimate_variance_profile<F: Real>(d: &Dataset<F>) -> Result<VarianceProfile<F>> {
    if d.len() < 2 {
        return Err(Error::DatasetTooSmall { need: 2, got: d.len() });
    }
    let plan = SpectralPlan::new(d.shape());
    let mut acc = BinVariance::new(d.shape().len());
    for x in d.items() {
        acc.push(&plan.forward(x)?);
    }
    VarianceProfile::new(acc.variance().into_iter().map(F::lit).collect(), d.shape().clone())
}

/// Position-wise mean of descending-sorted pixels with a normal-approximation
/// 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

pub fn intensity_profile<F: Real>(d: &Dataset<F>) -> IntensityProfile {
    let len = d.shape().len();
    let n = d.len() as f64;
    let mut sum = vec![0.0; len];
    let mut sumsq = vec![0.0; len];
    for x in d.items() {
        let mut px: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
        px.sort_by(|a, b| b.total_cmp(a));
        for (i, v) in px.into_iter().enumerate() {
            sum[i] += v;
            sumsq[i] += v * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let half: Vec<f64> = sumsq
        .iter()
        .zip(&mean)
        .map(|(ss, m)| {
            if d.len() < 2 {
                0.0
            } else {
                let var = ((ss - n * m * m) / (n - 1.0)).max(0.0);
                1.96 * (var / n).sqrt()
            }
        })
        .collect();
    IntensityProfile {
        ci_low: mean.iter().zip(&half).map(|(m, h)| m - h).collect(),
        ci_high: mean.iter().zip(&half).map(|(m, h)| m + h).collect(),
        mean,
    }
}

/// Mean absolute deviation between two intensity profiles.
pub fn profile_deviation(a: &IntensityProfile, b: &IntensityProfile) -> f64 {
    a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.mean.len() as f64
}

/// Per-rank mean and standard deviation of `20 log10(|y| + 1e-12)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeProfile {
    pub ranks: Vec<usize>,
    pub mean_db: Vec<f64>,
    pub std_db: Vec<f64>,
}

pub fn spectral_magnitude_profile<F: Real>(d: &Dataset<F>, band: Option<&BandMask>) -> Result<MagnitudeProfile> {
    let order = frequency_order(d.shape());
    let ranks: Vec<usize> = (0..order.len())
        .filter(|&r| band.is_none_or(|m| m.keep()[order.ranks()[r]]))
        .collect();
    let plan = SpectralPlan::new(d.shape());
    let mut sum = vec![0.0; ranks.len()];
    let mut sumsq = vec![0.0; ranks.len()];
    for x in d.items() {
        let y = plan.forward(x)?;
        for (k, &r) in ranks.iter().enumerate() {
            let db = 20.0 * (y.data()[order.ranks()[r]].norm().as_f64() + 1e-12).log10();
            sum[k] += db;
            sumsq[k] += db * db;
        }
    }
    let n = d.len() as f64;
    let mean_db: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_db = sumsq
        .iter()
        .zip(&mean_db)
        .map(|(ss, m)| (ss / n - m * m).max(0.0).sqrt())
        .collect();
    Ok(MagnitudeProfile { ranks, mean_db, std_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::spectral::{band_mask, BandKind};

    #[test]
    fn dots_counts_and_values() {
        let d = gen_dots::<f64, _>(200, 32, 32, 46, 50, &mut seeded(1)).unwrap();
        for x in d.items() {
            let k = x.data().iter().filter(|&&v| v == 1.0).count();
            assert!((46..=50).contains(&k));
            assert!(x.data().iter().all(|&v| v == 1.0 || v == -1.0));
        }
        assert!(gen_dots::<f64, _>(1, 2, 2, 1, 5, &mut seeded(1)).is_err());
    }

    #[test]
    fn single_image_profile_is_step() {
        let d = gen_dots::<f64, _>(1, 8, 8, 5, 5, &mut seeded(2)).unwrap();
        let p = intensity_profile(&d);
        for (i, m) in p.mean.iter().enumerate() {
            assert_eq!(*m, if i < 5 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn constant_dataset_profile_is_flat() {
        let shape = Shape::d2(2, 2);
        let items = vec![RealField::new(vec![0.25; 4], shape).unwrap(); 5];
        let p = intensity_profile(&Dataset::new(items, DatasetMeta::default()).unwrap());
        assert!(p.mean.iter().all(|&m| m == 0.25));
        assert!(p.ci_low.iter().zip(&p.ci_high).all(|(a, b)| a == b));
    }

    #[test]
    fn dots_ground_truth_profile_bounds() {
        let d = gen_dots::<f64, _>(300, 32, 32, 46, 50, &mut seeded(3)).unwrap();
        let p = intensity_profile(&d);
        assert!(p.mean[..46].iter().all(|&m| m == 1.0));
        assert!(p.mean[50..].iter().all(|&m| m == -1.0));
    }

    #[test]
    fn power_law_dc_is_amplitude() {
        let c = power_law_profile(&Shape::d2(8, 8), 3.0f64, 2.0).unwrap();
        assert_eq!(c.values()[0], 3.0);
    }

    #[test]
    fn identical_images_hit_floor() {
        let shape = Shape::d2(3, 3);
        let items = vec![RealField::new((0..9).map(f64::from).collect(), shape).unwrap(); 4];
        let c = estimate_variance_profile(&Dataset::new(items, DatasetMeta::default()).unwrap()).unwrap();
        assert!(c.values().iter().all(|&v| v == 1e-12));
    }

    #[test]
    fn mixture_moments() {
        let n = 100_000;
        let delta: f64 = 0.05;
        let d = gen_mixture1d(n, delta, &mut seeded(4)).unwrap();
        let xs: Vec<f64> = d.items().iter().map(|x| x.data()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 3.0 * ((1.0 + delta * delta) / n as f64).sqrt());
        // Var of the sample variance for this mixture is (μ4 − σ⁴)/n with μ4 ≈ 1
        let s2 = 1.0 + delta * delta;
        let mu4 = 1.0 + 6.0 * delta * delta + 3.0 * delta.powi(4);
        assert!((var - s2).abs() <= 3.0 * ((mu4 - s2 * s2) / n as f64).sqrt() + 1e-4);
        // two modes: almost no mass near 0, and both halves populated
        let near0 = xs.iter().filter(|x| x.abs() < 0.5).count();
        let pos = xs.iter().filter(|&&x| x > 0.0).count();
        assert_eq!(near0, 0);
        assert!((pos as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn dc_only_magnitude_profile() {
        let shape = Shape::d2(4, 4);
        // constant image 1/4 has DC = 16/4/4 = 1
        let items = vec![RealField::new(vec![0.25; 16], shape.clone()).unwrap(); 3];
        let ds = Dataset::new(items, DatasetMeta::default()).unwrap();
        let p = spectral_magnitude_profile(&ds, None).unwrap();
        assert!(p.mean_db[0].abs() < 1e-9);
        assert!(p.mean_db[1..].iter().all(|&v| v < -200.0));
        let order = frequency_order(&shape);
        let low = band_mask(&order, BandKind::LowPass, 0.25).unwrap();
        assert_eq!(spectral_magnitude_profile(&ds, Some(&low)).unwrap().ranks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_dots::<f64, _>(10, 8, 8, 3, 6, &mut seeded(9)).unwrap();
        let b = gen_dots::<f64, _>(10, 8, 8, 3, 6, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        let shape = Shape::d2(4, 4);
        let (p, _) = gen_power_law_gaussian(5, &shape, 1.0f64, 2.0, &mut seeded(9)).unwrap();
        let (q, _) = gen_power_law_gaussian(5, &shape, 1.0f64, 2.0, &mut seeded(9)).unwrap();
        assert_eq!(p, q);
    }
}
