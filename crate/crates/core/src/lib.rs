//! Diffusion processes in Fourier space parameterized by per-frequency SNR.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64` (and `f32` with a `32` suffix) for the
//! common case.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod denoise;
pub mod detect;
pub mod error;
pub mod gaussianity;
pub mod io;
pub mod process;
pub mod rng;
pub mod scalar;
pub mod sample;
pub mod schedule;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type RealField = spectral::RealField<f64>;
pub type Spectrum = spectral::Spectrum<f64>;
pub type MixingSchedule = schedule::MixingSchedule<f64>;
pub type VarianceProfile = schedule::VarianceProfile<f64>;
pub type SnrProfile = schedule::SnrProfile<f64>;
pub type ProcessKind = process::ProcessKind<f64>;
pub type ForwardProcess = process::ForwardProcess<f64>;
pub type NoisyState = process::NoisyState<f64>;
pub type LinearGaussianDenoiser = denoise::LinearGaussianDenoiser<f64>;
pub type MlpDenoiser = denoise::MlpDenoiser<f64>;
pub type TrainConfig = denoise::TrainConfig<f64>;
pub type Dataset = data::Dataset<f64>;

pub type RealField32 = spectral::RealField<f32>;
pub type Spectrum32 = spectral::Spectrum<f32>;
pub type MixingSchedule32 = schedule::MixingSchedule<f32>;
pub type VarianceProfile32 = schedule::VarianceProfile<f32>;
pub type ForwardProcess32 = process::ForwardProcess<f32>;
