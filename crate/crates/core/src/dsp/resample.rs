//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

use super::{AudioClip, Result};

/// Taps per side of the (cutoff-scaled) sinc kernel.
const TAPS: f64 = 16.0;
/// Kaiser window shape parameter.
const BETA: f64 = 8.0;

/// Resamples a clip to `target_rate`.
///
/// Equal rates pass the clip through bit-identically. Otherwise each output
/// sample is a windowed-sinc interpolation over 16 taps per side, with the
/// cutoff scaled to the lower of the two Nyquist frequencies and each kernel
/// normalized to unit weight sum so DC is preserved exactly.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }

    let src_len = clip.samples.len();
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = (src_len as f64 * ratio).round() as usize;
    // scale the sinc cutoff down when decimating, to suppress aliasing
    let cutoff = ratio.min(1.0);
    let half_width = TAPS / cutoff;
    let i0_beta = bessel_i0(BETA);

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n as f64 / ratio;
        let lo = ((pos - half_width).ceil() as isize).max(0) as usize;
        let hi = ((pos + half_width).floor() as isize).min(src_len as isize - 1) as usize;
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &x) in clip.samples[lo..=hi].iter().enumerate() {
            let t = cutoff * (pos - (lo + j) as f64);
            let w = cutoff * sinc(t) * kaiser(t / TAPS, i0_beta);
            num += x * w;
            den += w;
        }
        out.push(if den != 0.0 { num / den } else { 0.0 });
    }

    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
        source_id: clip.source_id.clone(),
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Kaiser window evaluated at normalized offset `u` in [-1, 1].
fn kaiser(u: f64, i0_beta: f64) -> f64 {
    let arg = 1.0 - u * u;
    if arg <= 0.0 {
        0.0
    } else {
        bessel_i0(BETA * arg.sqrt()) / i0_beta
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
