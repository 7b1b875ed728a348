//! Geometry-aware training toolkit for respiratory-sound classification.
//!
//! The crate is organized as a stack of small, independently testable layers:
//!
//! - [`autodiff`] — reverse-mode automatic differentiation over f64 tensors
//! - [`dsp`] — WAV decoding, resampling, cyclic padding, STFT and log-Mel features
//! - [`model`] — a patch-based spectrogram transformer with checkpoint I/O
//! - [`optim`] — SGD, AdamW, and a sharpness-aware (two-step min-max) wrapper
//! - [`data`] — annotation parsing, cycle slicing, splits, weighted sampling,
//!   and a seeded synthetic lung-sound generator
//! - [`eval`] — 4-class confusion matrices and Normal-vs-Abnormal Se/Sp/Score
//! - [`embed`] — exact t-SNE for embedding diagnostics
//!
//! Everything is 64-bit floating point and deterministic: the same inputs and
//! seeds produce bit-identical outputs.

pub mod autodiff;
pub mod data;
pub mod dsp;
pub mod embed;
pub mod eval;
pub mod model;
pub mod optim;
pub mod params;
pub mod seeds;

pub use autodiff::{Tape, Tensor, Value};
pub use params::ParamSet;
