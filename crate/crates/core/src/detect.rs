//! Spectral forgery detection: per-image power-law fits over a frequency
//! band, logistic regression on the fit parameters, and permutation tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::spectral::{frequency_order, BandKind, FrequencyOrdering, RealField, SpectralPlan};

/// Floor applied to magnitudes before taking logs.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub kind: BandKind,
    /// Proportion of frequencies in the band, in `(0, 1]`.
    pub fraction: f64,
}

impl Band {
    pub fn high(fraction: f64) -> Self {
        Band {
            kind: BandKind::HighPass,
            fraction,
        }
    }

    pub fn low(fraction: f64) -> Self {
        Band {
            kind: BandKind::LowPass,
            fraction,
        }
    }

    /// Rank range `[start, end)` covered by the band among `d` ranks.
    pub fn ranks(&self, d: usize) -> Result<(usize, usize)> {
        let k = crate::spectral::band_count(self.fraction, d)?;
        Ok(match self.kind {
            BandKind::LowPass => (0, k),
            BandKind::HighPass => (d - k, d),
        })
    }
}

/// `m_i ≈ a (f_i / f_lo)^b` over a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    /// Band proportion.
    pub tau: f64,
}

/// Normalized frequency of rank `r` among `d` ranks: `(r + 1)/d`.
pub fn rank_frequency(rank: usize, d: usize) -> f64 {
    (rank + 1) as f64 / d as f64
}

/// Least squares of `log m = log a + b log(f / f_lo)` over the band, where
/// `f = (rank+1)/d` and `f_lo` is the band's lowest frequency. Normalizing by
/// the band edge keeps the intercept inside the fitted range.
pub fn fit_power_law(magnitudes_by_rank: &[f64], band: Band) -> Result<PowerLawFit> {
    let d = magnitudes_by_rank.len();
    let (start, end) = band.ranks(d)?;
    if end - start < 3 {
        return Err(Error::InvalidArgument(format!(
            "band holds {} bins; a power-law fit needs at least 3",
            end - start
        )));
    }
    let slice = &magnitudes_by_rank[start..end];
    if slice.iter().all(|&m| !(m > 0.0)) {
        return Err(Error::Degenerate("all magnitudes in the band are zero".into()));
    }
    let f_lo = rank_frequency(start, d);
    let n = slice.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &m) in slice.iter().enumerate() {
        let x = (rank_frequency(start + i, d) / f_lo).ln();
        let y = m.max(MAGNITUDE_FLOOR).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let mx = sx / n;
    let my = sy / n;
    let b = (sxy - n * mx * my) / (sxx - n * mx * mx);
    let a = (my - b * mx).exp();
    Ok(PowerLawFit {
        a,
        b,
        tau: band.fraction,
    })
}

/// Magnitudes `|F x|` reordered by frequency rank.
pub fn ranked_magnitudes(x: &RealField<f64>, plan: &SpectralPlan<f64>, order: &FrequencyOrdering) -> Result<Vec<f64>> {
    let y = plan.forward(x)?;
    Ok(order.ranks().iter().map(|&j| y.data()[j].norm()).collect())
}

/// Raw `(a, b)` per image.
pub fn featurize_raw(dataset: &[RealField<f64>], band: Band) -> Result<Vec<[f64; 2]>> {
    let first = dataset.first().ok_or(Error::DatasetTooSmall { need: 1, got: 0 })?;
    let shape = first.shape().clone();
    let plan = SpectralPlan::new(&shape);
    let order = frequency_order(&shape);
    dataset
        .iter()
        .map(|x| {
            let fit = fit_power_law(&ranked_magnitudes(x, &plan, &order)?, band)?;
            Ok([fit.a, fit.b])
        })
        .collect()
}

/// Column-wise standardization to zero mean and unit variance. Constant
/// columns become zero.
pub fn standardize(features: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = features.len() as f64;
    let mut out = features.to_vec();
    for c in 0..2 {
        let mean = features.iter().map(|f| f[c]).sum::<f64>() / n;
        let var = features.iter().map(|f| (f[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for row in &mut out {
            row[c] = if sd > 0.0 { (row[c] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Standardized `(a, b)` features over the whole table.
pub fn featurize(dataset: &[RealField<f64>], band: Band) -> Result<Vec<[f64; 2]>> {
    Ok(standardize(&featurize_raw(dataset, band)?))
}

pub const LOGISTIC_ITERS: usize = 500;
pub const LOGISTIC_RATE: f64 = 0.1;
pub const LOGISTIC_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic {
    pub w: [f64; 2],
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    pub fn proba(&self, x: &[f64; 2]) -> f64 {
        sigmoid(self.w[0] * x[0] + self.w[1] * x[1] + self.bias)
    }

    /// Class 1 iff the probability exceeds one half; ties go to class 0.
    pub fn classify(&self, x: &[f64; 2]) -> bool {
        self.proba(x) > 0.5
    }

    pub fn accuracy(&self, features: &[[f64; 2]], labels: &[bool]) -> f64 {
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(x, &y)| self.classify(x) == y)
            .count();
        hits as f64 / features.len() as f64
    }
}

/// Full-batch gradient descent on the mean log-loss with an L2 penalty on
/// the weights, starting from zero.
pub fn logistic_fit(features: &[[f64; 2]], labels: &[bool]) -> Result<Logistic> {
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![features.len()],
            got: vec![labels.len()],
        });
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let n = features.len() as f64;
    let mut m = Logistic {
        w: [0.0; 2],
        bias: 0.0,
    };
    for _ in 0..LOGISTIC_ITERS {
        let mut g = [0.0; 3];
        for (x, &y) in features.iter().zip(labels) {
            let r = m.proba(x) - if y { 1.0 } else { 0.0 };
            g[0] += r * x[0];
            g[1] += r * x[1];
            g[2] += r;
        }
        m.w[0] -= LOGISTIC_RATE * (g[0] / n + LOGISTIC_L2 * m.w[0]);
        m.w[1] -= LOGISTIC_RATE * (g[1] / n + LOGISTIC_L2 * m.w[1]);
        m.bias -= LOGISTIC_RATE * g[2] / n;
    }
    Ok(m)
}

pub const CV_FOLDS: usize = 5;

/// Fold of a feature row from an FNV-1a hash of its bits, so identical rows
/// always share a fold.
pub fn fold_of(x: &[f64; 2]) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    (h % CV_FOLDS as u64) as usize
}

/// 5-fold cross-validated accuracy (pooled over held-out rows).
pub fn cv_accuracy(features: &[[f64; 2]], labels: &[bool]) -> Result<f64> {
    let folds: Vec<usize> = features.iter().map(fold_of).collect();
    cv_accuracy_with_folds(features, labels, &folds)
}

fn cv_accuracy_with_folds(features: &[[f64; 2]], labels: &[bool], folds: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for k in 0..CV_FOLDS {
        let (mut trx, mut try_) = (Vec::new(), Vec::new());
        let (mut tex, mut tey) = (Vec::new(), Vec::new());
        for ((x, &y), &f) in features.iter().zip(labels).zip(folds) {
            if f == k {
                tex.push(*x);
                tey.push(y);
            } else {
                trx.push(*x);
                try_.push(y);
            }
        }
        if tex.is_empty() {
            return Err(Error::DegenerateFold { fold: k });
        }
        let m = logistic_fit(&trx, &try_).map_err(|_| Error::DegenerateFold { fold: k })?;
        hits += tex.iter().zip(&tey).filter(|(x, &y)| m.classify(x) == y).count();
        total += tex.len();
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
}

/// Permutation test on cross-validated accuracy:
/// `p = (1 + #{permuted ≥ observed}) / (1 + B)`.
pub fn permutation_test<R: Rng + ?Sized>(
    features: &[[f64; 2]],
    labels: &[bool],
    permutations: usize,
    rng: &mut R,
) -> Result<PermutationResult> {
    if permutations < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 permutations, got {permutations}"
        )));
    }
    let folds: Vec<usize> = features.iter().map(fold_of).collect();
    let observed = cv_accuracy_with_folds(features, labels, &folds)?;
    let mut perm = labels.to_vec();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        perm.shuffle(rng);
        // a permutation that leaves a training split single-class scores as chance
        let stat = cv_accuracy_with_folds(features, &perm, &folds).unwrap_or(0.5);
        if stat >= observed {
            exceed += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    pub accuracy: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub band: Band,
    pub mean_accuracy: f64,
    pub tp_rate_05: f64,
    pub tp_rate_01: f64,
    pub splits: Vec<SplitResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub splits: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            splits: 100,
            permutations: 1000,
            seed: 0,
        }
    }
}

/// Splits both datasets into `splits` disjoint partitions (in order) and
/// runs one permutation test per partition and band. Features are
/// standardized within each partition.
pub fn run_detection(
    real: &[RealField<f64>],
    generated: &[RealField<f64>],
    bands: &[Band],
    cfg: &DetectionConfig,
) -> Result<Vec<DetectionReport>> {
    let need = cfg.splits * 2;
    for set in [real, generated] {
        if set.len() < need || cfg.splits == 0 {
            return Err(Error::DatasetTooSmall {
                need,
                got: set.len(),
            });
        }
    }
    let per_real = real.len() / cfg.splits;
    let per_gen = generated.len() / cfg.splits;
    let mut reports = Vec::with_capacity(bands.len());
    for (bi, &band) in bands.iter().enumerate() {
        let raw_real = featurize_raw(real, band)?;
        let raw_gen = featurize_raw(generated, band)?;
        let mut splits = Vec::with_capacity(cfg.splits);
        for s in 0..cfg.splits {
            let mut table: Vec<[f64; 2]> = raw_real[s * per_real..(s + 1) * per_real].to_vec();
            table.extend_from_slice(&raw_gen[s * per_gen..(s + 1) * per_gen]);
            let labels: Vec<bool> = (0..table.len()).map(|i| i >= per_real).collect();
            let table = standardize(&table);
            let mut rng = stream(cfg.seed, (bi * cfg.splits + s) as u64);
            let r = permutation_test(&table, &labels, cfg.permutations, &mut rng)?;
            splits.push(SplitResult {
                split: s,
                accuracy: r.observed,
                p_value: r.p_value,
            });
        }
        let n = splits.len() as f64;
        reports.push(DetectionReport {
            band,
            mean_accuracy: splits.iter().map(|s| s.accuracy).sum::<f64>() / n,
            tp_rate_05: splits.iter().filter(|s| s.p_value <= 0.05).count() as f64 / n,
            tp_rate_01: splits.iter().filter(|s| s.p_value <= 0.01).count() as f64 / n,
            splits,
        });
    }
    Ok(reports)
}
