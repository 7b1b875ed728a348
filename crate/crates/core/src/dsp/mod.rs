//! Deterministic audio front end.
//!
//! The pipeline runs WAV bytes → mono f64 samples → 16 kHz → fixed-duration
//! cyclic padding → Hann STFT → mel filterbank → log energies. Every stage is
//! a pure function, so the same input bytes always produce a bit-identical
//! spectrogram.

mod fft;
mod mel;
mod resample;
mod spg;
mod wav;

pub use fft::fft_in_place;
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use spg::{read_spectrogram, write_spectrogram};
pub use wav::{decode_wav, encode_wav_pcm16};

pub use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Value;

/// Spectrogram frame counts are padded up to a multiple of this, so the time
/// axis always divides evenly into 16-wide patches.
pub const FRAME_ALIGN: usize = 16;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("wav decode error in chunk {chunk:?}: {detail}")]
    Decode { chunk: String, detail: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid mel config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// A mono PCM signal with its sample rate and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Spectrogram front-end parameters.
///
/// Defaults: 16 kHz, 25 ms window / 10 ms hop, 512-point FFT, 128 mel bins
/// over 0–8 kHz, log floor 1e-10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    /// Analysis window length in samples.
    pub window: usize,
    /// Hop between adjacent frames in samples.
    pub hop: usize,
    pub fft_size: usize,
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Linear-power floor applied before the log.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window: 400,
            hop: 160,
            fft_size: 512,
            mel_bins: 128,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(DspError::Config("sample_rate must be positive".into()));
        }
        if self.window == 0 || self.hop == 0 {
            return Err(DspError::Config("window and hop must be positive".into()));
        }
        if self.window > self.fft_size {
            return Err(DspError::Config(format!(
                "window {} exceeds fft_size {}",
                self.window, self.fft_size
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(DspError::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.mel_bins == 0 {
            return Err(DspError::Config("mel_bins must be positive".into()));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return Err(DspError::Config(format!(
                "fmax {} exceeds Nyquist {}",
                self.fmax,
                self.sample_rate as f64 / 2.0
            )));
        }
        if self.fmin < 0.0 || self.fmin >= self.fmax {
            return Err(DspError::Config(format!(
                "fmin {} must lie in [0, fmax)",
                self.fmin
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(DspError::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of retained (one-sided) FFT bins.
    pub fn spectrum_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Raw frame count for a signal of `len` samples.
    pub fn raw_frames(&self, len: usize) -> usize {
        1 + (len - self.window) / self.hop
    }

    /// Frame count after alignment padding for a signal of `len` samples.
    pub fn padded_frames(&self, len: usize) -> usize {
        align_up(self.raw_frames(len), FRAME_ALIGN)
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }
}

fn align_up(n: usize, align: usize) -> usize {
    n.div_ceil(align) * align
}

/// A log-Mel spectrogram: `bins × frames` natural-log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    /// Row-major `[bins, frames]` values.
    pub values: Value,
    pub hop_seconds: f64,
    pub mel: MelConfig,
}

impl Spectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.values.data()[bin * self.frames + frame]
    }
}

/// Repeats a short clip end-to-end until it reaches `target_seconds`, or
/// truncates a longer one to its first `target_seconds`.
pub fn cyclic_pad(clip: &AudioClip, target_seconds: f64) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(DspError::Input("cannot pad an empty signal".into()));
    }
    let target = (target_seconds * clip.sample_rate as f64).round() as usize;
    let samples = if clip.samples.len() >= target {
        clip.samples[..target].to_vec()
    } else {
        (0..target)
            .map(|i| clip.samples[i % clip.samples.len()])
            .collect()
    };
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_id: clip.source_id.clone(),
    })
}

/// Complex one-sided STFT: `frames` rows of `fft/2 + 1` bins.
#[derive(Debug, Clone)]
pub struct StftFrames {
    pub n_frames: usize,
    pub n_bins: usize,
    data: Vec<Complex<f64>>,
}

impl StftFrames {
    pub fn frame(&self, t: usize) -> &[Complex<f64>] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }
}

/// Hann-windowed, hop-spaced, zero-padded short-time Fourier transform.
pub fn stft(clip: &AudioClip, config: &MelConfig) -> Result<StftFrames> {
    config.validate()?;
    if clip.samples.len() < config.window {
        return Err(DspError::Input(format!(
            "signal of {} samples is shorter than the {}-sample analysis window",
            clip.samples.len(),
            config.window
        )));
    }
    let n_frames = config.raw_frames(clip.samples.len());
    let n_bins = config.spectrum_bins();
    let window = hann(config.window);

    let mut data = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    for t in 0..n_frames {
        let start = t * config.hop;
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex::new(clip.samples[start + i] * w, 0.0);
        }
        for slot in buf.iter_mut().skip(config.window) {
            *slot = Complex::new(0.0, 0.0);
        }
        fft_in_place(&mut buf);
        data.extend_from_slice(&buf[..n_bins]);
    }
    Ok(StftFrames {
        n_frames,
        n_bins,
        data,
    })
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Full log-Mel pipeline for an already resampled and padded clip.
///
/// The frame axis is right-padded by repeating the last frame up to the next
/// multiple of [`FRAME_ALIGN`] (798 → 800 at the default 8 s configuration).
pub fn log_mel(clip: &AudioClip, config: &MelConfig) -> Result<Spectrogram> {
    if clip.sample_rate != config.sample_rate {
        return Err(DspError::Input(format!(
            "clip sampled at {} Hz but config expects {} Hz",
            clip.sample_rate, config.sample_rate
        )));
    }
    let spectra = stft(clip, config)?;
    let bank = mel_filterbank(config)?;
    let raw_frames = spectra.n_frames;
    let frames = align_up(raw_frames, FRAME_ALIGN);
    let bins = config.mel_bins;

    let mut power = vec![0.0; spectra.n_bins];
    let mut values = vec![0.0; bins * frames];
    for t in 0..raw_frames {
        for (p, c) in power.iter_mut().zip(spectra.frame(t)) {
            *p = c.norm_sqr();
        }
        for m in 0..bins {
            let energy = bank.apply_row(m, &power);
            values[m * frames + t] = energy.max(config.log_floor).ln();
        }
    }
    // repeat the last real frame into the alignment padding
    for t in raw_frames..frames {
        for m in 0..bins {
            values[m * frames + t] = values[m * frames + raw_frames - 1];
        }
    }

    Ok(Spectrogram {
        bins,
        frames,
        values: Value::matrix(bins, frames, values),
        hop_seconds: config.hop_seconds(),
        mel: config.clone(),
    })
}
