//! Unitary real/complex DFTs, Hermitian noise, frequency ordering and band masks.
//!
//! Fields are stored row-major. The transform is normalized by `1/sqrt(N)` in
//! both directions (with `N` the total element count), so white noise of unit
//! variance maps to white complex noise of unit variance and Parseval holds
//! without extra factors.
//!
//! Spectra use full complex storage. A spectrum of a real field satisfies
//! `y[j] == conj(y[rev(j)])` where `rev` reverses each axis index modulo its
//! length; bins with `rev(j) == j` (DC, and Nyquist bins on even axes) are real.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::normal;
use crate::scalar::Real;

/// Relative tolerance used when checking Hermitian symmetry before an inverse transform.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Extents of a 1D or 2D field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "only 1D and 2D shapes are supported, got {} dims",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero extent in shape {dims:?}")));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn d1(n: usize) -> Self {
        Shape::new(&[n]).expect("valid 1D shape")
    }

    pub fn d2(rows: usize, cols: usize) -> Self {
        Shape::new(&[rows, cols]).expect("valid 2D shape")
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of a flat index; 1D shapes report row 0.
    pub fn unravel(&self, flat: usize) -> (usize, usize) {
        match self.0.as_slice() {
            [_] => (0, flat),
            [_, cols] => (flat / cols, flat % cols),
            _ => unreachable!(),
        }
    }

    /// Flat index of the conjugate partner (per-axis modular reversal).
    pub fn partner(&self, flat: usize) -> usize {
        match self.0.as_slice() {
            [n] => (n - flat % n) % n,
            [rows, cols] => {
                let (r, c) = (flat / cols, flat % cols);
                ((rows - r) % rows) * cols + (cols - c) % cols
            }
            _ => unreachable!(),
        }
    }

    pub fn is_self_conjugate(&self, flat: usize) -> bool {
        self.partner(flat) == flat
    }

    fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: self.0.clone(),
                got: other.0.clone(),
            });
        }
        Ok(())
    }
}

/// Real-valued field (pixel space).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField<F> {
    data: Vec<F>,
    shape: Shape,
}

impl<F: Real> RealField<F> {
    pub fn new(data: Vec<F>, shape: Shape) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape.dims()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(RealField { data, shape })
    }

    pub fn zeros(shape: Shape) -> Self {
        RealField {
            data: vec![F::zero(); shape.len()],
            shape,
        }
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm_sqr(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Complex frequency-domain tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<F> {
    data: Vec<Complex<F>>,
    shape: Shape,
}

impl<F: Real> Spectrum<F> {
    pub fn new(data: Vec<Complex<F>>, shape: Shape) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape.dims()
            )));
        }
        Ok(Spectrum { data, shape })
    }

    pub fn zeros(shape: Shape) -> Self {
        Spectrum {
            data: vec![Complex::new(F::zero(), F::zero()); shape.len()],
            shape,
        }
    }

    pub fn data(&self) -> &[Complex<F>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<F>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<F>> {
        self.data
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm_sqr(&self) -> F {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest relative deviation from Hermitian symmetry, with its flat index.
    pub fn hermitian_residual(&self) -> (usize, F) {
        let scale = self
            .data
            .iter()
            .map(|z| z.norm())
            .fold(F::zero(), F::max);
        if scale == F::zero() {
            return (0, F::zero());
        }
        let mut worst = (0, F::zero());
        for (j, z) in self.data.iter().enumerate() {
            let p = self.data[self.shape.partner(j)];
            let r = (*z - p.conj()).norm() / scale;
            if r > worst.1 {
                worst = (j, r);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: F) -> bool {
        self.hermitian_residual().1 <= tol
    }

    /// Entry-wise `a*self + b*other`.
    pub fn axpby(&self, a: F, other: &Spectrum<F>, b: F) -> Result<Spectrum<F>> {
        self.shape.ensure_same(&other.shape)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x.scale(a) + y.scale(b))
            .collect();
        Ok(Spectrum {
            data,
            shape: self.shape.clone(),
        })
    }

    /// Entry-wise multiplication by a real per-bin coefficient.
    pub fn scale_bins(&self, coef: &[F]) -> Spectrum<F> {
        debug_assert_eq!(coef.len(), self.data.len());
        Spectrum {
            data: self.data.iter().zip(coef).map(|(z, &k)| z.scale(k)).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Cached FFT plans for one shape. Reuse in hot loops; the free functions
/// build a fresh plan per call.
pub struct SpectralPlan<F: Real> {
    shape: Shape,
    row_fwd: Arc<dyn Fft<F>>,
    row_inv: Arc<dyn Fft<F>>,
    col_fwd: Option<Arc<dyn Fft<F>>>,
    col_inv: Option<Arc<dyn Fft<F>>>,
    norm: F,
}

impl<F: Real> SpectralPlan<F> {
    pub fn new(shape: &Shape) -> Self {
        let mut planner = FftPlanner::new();
        let dims = shape.dims();
        let cols = *dims.last().expect("non-empty shape");
        let (col_fwd, col_inv) = if dims.len() == 2 {
            (
                Some(planner.plan_fft_forward(dims[0])),
                Some(planner.plan_fft_inverse(dims[0])),
            )
        } else {
            (None, None)
        };
        SpectralPlan {
            shape: shape.clone(),
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd,
            col_inv,
            norm: F::one() / F::from_usize_lossy(shape.len()).sqrt(),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    fn run(&self, buf: &mut [Complex<F>], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        if let Some(col) = col {
            let (rows, cols) = (self.shape.dims()[0], self.shape.dims()[1]);
            let mut scratch = vec![Complex::new(F::zero(), F::zero()); rows];
            for c in 0..cols {
                for r in 0..rows {
                    scratch[r] = buf[r * cols + c];
                }
                col.process(&mut scratch);
                for r in 0..rows {
                    buf[r * cols + c] = scratch[r];
                }
            }
        }
        for z in buf.iter_mut() {
            *z = z.scale(self.norm);
        }
    }

    pub fn forward(&self, x: &RealField<F>) -> Result<Spectrum<F>> {
        self.shape.ensure_same(x.shape())?;
        let mut buf: Vec<Complex<F>> = x.data.iter().map(|&v| Complex::new(v, F::zero())).collect();
        self.run(&mut buf, false);
        Ok(Spectrum {
            data: buf,
            shape: self.shape.clone(),
        })
    }

    /// Unitary DFT of an arbitrary complex buffer (no symmetry assumptions).
    pub fn forward_complex(&self, buf: &mut [Complex<F>]) {
        debug_assert_eq!(buf.len(), self.shape.len());
        self.run(buf, false);
    }

    /// Unitary inverse DFT of an arbitrary complex buffer. This is also the
    /// adjoint of the forward transform.
    pub fn inverse_complex(&self, buf: &mut [Complex<F>]) {
        debug_assert_eq!(buf.len(), self.shape.len());
        self.run(buf, true);
    }

    /// Inverse transform keeping only the real part, without a symmetry check.
    pub fn inverse_real_part(&self, y: &Spectrum<F>) -> Result<RealField<F>> {
        self.shape.ensure_same(y.shape())?;
        let mut buf = y.data.clone();
        self.run(&mut buf, true);
        Ok(RealField {
            data: buf.into_iter().map(|z| z.re).collect(),
            shape: self.shape.clone(),
        })
    }

    pub fn inverse(&self, y: &Spectrum<F>) -> Result<RealField<F>> {
        let (index, residual) = y.hermitian_residual();
        if residual > F::lit(HERMITIAN_TOL) {
            return Err(Error::Symmetry {
                index,
                residual: residual.as_f64(),
            });
        }
        self.inverse_real_part(y)
    }
}

pub fn forward_transform<F: Real>(x: &RealField<F>) -> Result<Spectrum<F>> {
    SpectralPlan::new(x.shape()).forward(x)
}

pub fn inverse_transform<F: Real>(y: &Spectrum<F>) -> Result<RealField<F>> {
    SpectralPlan::new(y.shape()).inverse(y)
}

/// Draws a Hermitian-symmetric complex Gaussian spectrum with per-bin total
/// variance `profile[j]` (split evenly between real and imaginary parts).
/// Self-conjugate bins are real with variance `profile[j]`. The partner of
/// bin `j` copies the conjugate of the draw made at the lower flat index.
pub fn sample_hermitian_noise<F: Real, R: Rng + ?Sized>(
    profile: &[F],
    shape: &Shape,
    rng: &mut R,
) -> Result<Spectrum<F>> {
    if profile.len() != shape.len() {
        return Err(Error::InvalidProfile(format!(
            "profile length {} does not match shape {:?}",
            profile.len(),
            shape.dims()
        )));
    }
    if let Some(i) = profile.iter().position(|v| !(*v >= F::zero()) || !v.is_finite()) {
        return Err(Error::InvalidProfile(format!(
            "entry {i} is negative or non-finite ({})",
            profile[i]
        )));
    }
    let half = F::lit(0.5);
    let mut data = vec![Complex::new(F::zero(), F::zero()); shape.len()];
    for j in 0..shape.len() {
        let p = shape.partner(j);
        if p == j {
            data[j] = Complex::new(profile[j].sqrt() * normal::<F, _>(rng), F::zero());
        } else if j < p {
            let s = (profile[j] * half).sqrt();
            let z = Complex::new(s * normal::<F, _>(rng), s * normal::<F, _>(rng));
            data[j] = z;
            data[p] = z.conj();
        }
    }
    Ok(Spectrum {
        data,
        shape: shape.clone(),
    })
}

/// Low-to-high frequency ordering by Manhattan distance to DC on the
/// centered grid. Ties break by flat (row-major) index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyOrdering {
    shape: Shape,
    ranks: Vec<usize>,
    distances: Vec<usize>,
    positions: Vec<usize>,
}

impl FrequencyOrdering {
    /// Flat indices in rank order (rank 0 is DC).
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Distance of each flat index.
    pub fn distances(&self) -> &[usize] {
        &self.distances
    }

    /// Rank of each flat index.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Flat index whose rank mirrors that of `flat` (`r <-> d-1-r`).
    pub fn flip(&self, flat: usize) -> usize {
        let d = self.ranks.len();
        self.ranks[d - 1 - self.positions[flat]]
    }

    /// Reorders a per-flat-index array into rank order.
    pub fn gather<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.ranks.iter().map(|&j| values[j]).collect()
    }

    pub fn max_distance(&self) -> usize {
        self.distances.iter().copied().max().unwrap_or(0)
    }
}

fn centered_distance(k: usize, n: usize) -> usize {
    let c = n / 2;
    let shifted = (k + c) % n;
    shifted.abs_diff(c)
}

pub fn frequency_order(shape: &Shape) -> FrequencyOrdering {
    let distances: Vec<usize> = (0..shape.len())
        .map(|j| match shape.dims() {
            [n] => centered_distance(j, *n),
            [rows, cols] => {
                let (r, c) = shape.unravel(j);
                centered_distance(r, *rows) + centered_distance(c, *cols)
            }
            _ => unreachable!(),
        })
        .collect();
    let mut ranks: Vec<usize> = (0..shape.len()).collect();
    // stable sort keeps row-major order within a distance shell
    ranks.sort_by_key(|&j| distances[j]);
    let mut positions = vec![0; ranks.len()];
    for (r, &j) in ranks.iter().enumerate() {
        positions[j] = r;
    }
    FrequencyOrdering {
        shape: shape.clone(),
        ranks,
        distances,
        positions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    LowPass,
    HighPass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    keep: Vec<bool>,
    kind: BandKind,
    /// Distance of the boundary bin: largest kept distance for low-pass,
    /// smallest kept distance for high-pass.
    cutoff: usize,
    shape: Shape,
}

impl BandMask {
    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn kind(&self) -> BandKind {
        self.kind
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Mask over the whole index set with explicit keep flags.
    pub fn from_keep(keep: Vec<bool>, kind: BandKind, shape: Shape) -> Result<Self> {
        if keep.len() != shape.len() {
            return Err(Error::InvalidArgument("mask length does not match shape".into()));
        }
        Ok(BandMask {
            keep,
            kind,
            cutoff: 0,
            shape,
        })
    }
}

/// Number of bins a band with proportion `fraction` covers.
pub fn band_count(fraction: f64, total: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "band fraction must lie in (0, 1], got {fraction}"
        )));
    }
    // guard against 0.15*100 = 15.000000000000002 rounding up
    let raw = fraction * total as f64;
    let k = if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as usize
    } else {
        raw.ceil() as usize
    };
    Ok(k.clamp(1, total))
}

/// Keeps the lowest (low-pass) or highest (high-pass) `ceil(fraction * d)` ranks.
pub fn band_mask(ordering: &FrequencyOrdering, kind: BandKind, fraction: f64) -> Result<BandMask> {
    let d = ordering.len();
    let k = band_count(fraction, d)?;
    let selected = match kind {
        BandKind::LowPass => &ordering.ranks[..k],
        BandKind::HighPass => &ordering.ranks[d - k..],
    };
    let mut keep = vec![false; d];
    for &j in selected {
        keep[j] = true;
    }
    let cutoff = match kind {
        BandKind::LowPass => ordering.distances[selected[k - 1]],
        BandKind::HighPass => ordering.distances[selected[0]],
    };
    Ok(BandMask {
        keep,
        kind,
        cutoff,
        shape: ordering.shape.clone(),
    })
}

/// Zeros masked-out bins. A bin survives only if it and its conjugate
/// partner are both kept, so the output stays Hermitian.
pub fn apply_mask<F: Real>(y: &Spectrum<F>, m: &BandMask) -> Result<Spectrum<F>> {
    y.shape.ensure_same(&m.shape)?;
    let zero = Complex::new(F::zero(), F::zero());
    let data = y
        .data
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            if m.keep[j] && m.keep[y.shape.partner(j)] {
                z
            } else {
                zero
            }
        })
        .collect();
    Ok(Spectrum {
        data,
        shape: y.shape.clone(),
    })
}
