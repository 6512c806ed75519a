//! Binary tensor files, PGM images and MLP checkpoints.
//!
//! FTEN layout (little-endian): magic `FTEN`, version `u32 = 1`, dtype `u8`
//! (0 real, 1 complex interleaved), ndim `u8`, `ndim` extents as `u64`, then
//! the row-major `f64` payload.
//!
//! FDLM checkpoint layout (little-endian): magic `FDLM`, version `u32 = 1`,
//! process tag `u8`, EqualSNR constant `f64`, ndim `u8`, extents `u64`,
//! hidden width `u64`, `T` as `u64`, parameter count `u64`, parameters `f64`.

use std::fs;
use std::path::Path;

use num_complex::Complex;

use crate::denoise::{kind_tag, MlpDenoiser};
use crate::error::{Error, Result};
use crate::process::ProcessKind;
use crate::spectral::{RealField, Shape};

pub const TENSOR_MAGIC: [u8; 4] = *b"FTEN";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FDLM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Real { dims: Vec<usize>, data: Vec<f64> },
    Complex { dims: Vec<usize>, data: Vec<Complex<f64>> },
}

impl Tensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            Tensor::Real { dims, .. } | Tensor::Complex { dims, .. } => dims,
        }
    }

    /// Stacks same-shaped fields into one `[n, ...shape]` tensor.
    pub fn stack(items: &[RealField<f64>]) -> Result<Self> {
        let first = items.first().ok_or(Error::DatasetTooSmall { need: 1, got: 0 })?;
        let mut dims = vec![items.len()];
        dims.extend_from_slice(first.shape().dims());
        let mut data = Vec::with_capacity(items.len() * first.len());
        for x in items {
            if x.shape() != first.shape() {
                return Err(Error::ShapeMismatch {
                    expected: first.shape().dims().to_vec(),
                    got: x.shape().dims().to_vec(),
                });
            }
            data.extend_from_slice(x.data());
        }
        Ok(Tensor::Real { dims, data })
    }

    /// Inverse of [`Tensor::stack`].
    pub fn unstack(&self) -> Result<Vec<RealField<f64>>> {
        let Tensor::Real { dims, data } = self else {
            return Err(Error::Malformed("expected a real tensor".into()));
        };
        if dims.len() < 2 {
            return Err(Error::Malformed("stacked tensor needs a leading item axis".into()));
        }
        let shape = Shape::new(&dims[1..])?;
        let len = shape.len();
        data.chunks(len)
            .map(|c| RealField::new(c.to_vec(), shape.clone()))
            .collect()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let have = self.buf.len() - self.pos;
        if have < n {
            return Err(Error::Truncated { missing: n - have });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// Checks that `count` f64 values remain before reading them.
    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count.checked_mul(8).ok_or(Error::DimensionOverflow)?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
    fn dims(&mut self) -> Result<(Vec<usize>, usize)> {
        let ndim = self.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(self.u64()?).map_err(|_| Error::DimensionOverflow)?;
            count = count.checked_mul(d).ok_or(Error::DimensionOverflow)?;
            dims.push(d);
        }
        Ok((dims, count))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let dims = t.dims();
    if dims.len() > u8::MAX as usize {
        return Err(Error::DimensionOverflow);
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&TENSOR_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(matches!(t, Tensor::Complex { .. }) as u8);
    w.u8(dims.len() as u8);
    for &d in dims {
        w.u64(d as u64);
    }
    match t {
        Tensor::Real { data, .. } => data.iter().for_each(|&v| w.f64(v)),
        Tensor::Complex { data, .. } => data.iter().for_each(|z| {
            w.f64(z.re);
            w.f64(z.im);
        }),
    }
    Ok(w.0)
}

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader { buf, pos: 0 };
    r.magic(TENSOR_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = r.u8()?;
    let (dims, count) = r.dims()?;
    let t = match dtype {
        0 => Tensor::Real {
            data: r.f64s(count)?,
            dims,
        },
        1 => {
            let flat = r.f64s(count.checked_mul(2).ok_or(Error::DimensionOverflow)?)?;
            Tensor::Complex {
                data: flat.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect(),
                dims,
            }
        }
        other => return Err(Error::Malformed(format!("unknown dtype {other}"))),
    };
    r.finish()?;
    Ok(t)
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, encode_tensor(t)?).map_err(|e| io_err(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path).map_err(|e| io_err(path, e))?)
}

/// Binary P5 image; `[−1, 1]` maps affinely onto `[0, 255]` with clamping.
pub fn encode_pgm(x: &RealField<f64>) -> Result<Vec<u8>> {
    let (h, w) = match x.shape().dims() {
        [n] => (1, *n),
        [h, w] => (*h, *w),
        _ => unreachable!(),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        x.data()
            .iter()
            .map(|&v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

pub fn save_pgm(path: &Path, x: &RealField<f64>) -> Result<()> {
    fs::write(path, encode_pgm(x)?).map_err(|e| io_err(path, e))
}

/// Trained MLP plus the process it was trained for.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ProcessKind<f64>,
    pub model: MlpDenoiser<f64>,
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let m = &c.model;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(kind_tag(c.kind));
    w.f64(match c.kind {
        ProcessKind::EqualSnr { c0 } => c0,
        _ => 1.0,
    });
    w.u8(m.shape().ndim() as u8);
    for &d in m.shape().dims() {
        w.u64(d as u64);
    }
    w.u64(m.hidden() as u64);
    w.u64(m.steps() as u64);
    w.u64(m.params().len() as u64);
    m.params().iter().for_each(|&p| w.f64(p));
    w.0
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let tag = r.u8()?;
    let c0 = r.f64()?;
    let kind = match tag {
        0 => ProcessKind::Ddpm,
        1 => ProcessKind::EqualSnr { c0 },
        2 => ProcessKind::FlippedSnr,
        other => return Err(Error::Malformed(format!("unknown process tag {other}"))),
    };
    let (dims, _) = r.dims()?;
    let shape = Shape::new(&dims)?;
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::DimensionOverflow);
    let hidden = to_usize(r.u64()?)?;
    let steps = to_usize(r.u64()?)?;
    let count = to_usize(r.u64()?)?;
    let params = r.f64s(count)?;
    r.finish()?;
    Ok(Checkpoint {
        kind,
        model: MlpDenoiser::from_params(shape, hidden, steps, params)?,
    })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(c)).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path).map_err(|e| io_err(path, e))?)
}
