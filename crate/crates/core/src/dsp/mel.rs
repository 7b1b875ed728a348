//! HTK-scale mel filterbank.

use super::{DspError, MelConfig, Result};

/// HTK mel scale: `2595 * log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over one-sided FFT power spectra.
///
/// Triangle centers are equally spaced on the mel scale between `fmin` and
/// `fmax`. Each weight is the triangle averaged over the corresponding FFT
/// bin's frequency band (rather than point-sampled at the bin center), so
/// narrow low-frequency filters keep nonzero support even when they are
/// finer than the FFT resolution. Rows are normalized to unit weight sum,
/// making each output a weighted mean of bin powers: flat input spectra map
/// to flat mel spectra.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `[n_mels, n_bins]` weights.
    weights: Vec<f64>,
    /// Triangle center frequencies in Hz, strictly increasing.
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn weight(&self, mel: usize, bin: usize) -> f64 {
        self.weights[mel * self.n_bins + bin]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.weights[mel * self.n_bins..(mel + 1) * self.n_bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Applies one filter row to a power spectrum.
    pub fn apply_row(&self, mel: usize, power: &[f64]) -> f64 {
        debug_assert_eq!(power.len(), self.n_bins);
        self.row(mel)
            .iter()
            .zip(power)
            .map(|(w, p)| w * p)
            .sum()
    }
}

/// Builds the filterbank for a validated config.
pub fn mel_filterbank(config: &MelConfig) -> Result<MelFilterbank> {
    config.validate()?;
    let n_mels = config.mel_bins;
    let n_bins = config.spectrum_bins();
    let bin_width = config.sample_rate as f64 / config.fft_size as f64;

    let mel_lo = hz_to_mel(config.fmin);
    let mel_hi = hz_to_mel(config.fmax);
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let mut row_sum = 0.0;
        for k in 0..n_bins {
            let band_lo = k as f64 * bin_width - bin_width / 2.0;
            let band_hi = k as f64 * bin_width + bin_width / 2.0;
            let w = triangle_band_average(left, center, right, band_lo, band_hi);
            weights[m * n_bins + k] = w;
            row_sum += w;
        }
        if row_sum <= 0.0 {
            return Err(DspError::Config(format!(
                "mel filter {m} is empty: {} mel bins exceed the fft resolution",
                n_mels
            )));
        }
        for k in 0..n_bins {
            weights[m * n_bins + k] /= row_sum;
        }
    }

    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        centers_hz: edges_hz[1..=n_mels].to_vec(),
    })
}

/// Mean of the triangle (left, center, right) over the band [a, b].
fn triangle_band_average(left: f64, center: f64, right: f64, a: f64, b: f64) -> f64 {
    debug_assert!(b > a);
    let rising = segment_integral(a.max(left), b.min(center), |f| {
        (f - left) / (center - left)
    });
    let falling = segment_integral(a.max(center), b.min(right), |f| {
        (right - f) / (right - center)
    });
    (rising + falling) / (b - a)
}

/// Integral of a linear function over [lo, hi] via the midpoint rule (exact
/// for linear integrands); zero when the interval is empty.
fn segment_integral(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        0.0
    } else {
        (hi - lo) * f((lo + hi) / 2.0)
    }
}
