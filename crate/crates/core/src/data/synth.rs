//! Seeded synthetic lung-sound generator.
//!
//! Desk-scale stand-in audio with one acoustic signature per class:
//!
//! - Normal: low-amplitude band-limited (100–1000 Hz) noise
//! - Crackle: Normal plus 5–20 exponentially damped impulses (2–10 ms decay)
//! - Wheeze: Normal plus a slowly drifting 200–800 Hz tone covering more
//!   than half of the clip
//! - Both: impulses and tone superimposed
//!
//! Everything is driven by the caller's RNG, so a `(class, seed)` pair is a
//! complete recipe for the waveform.

use rand::Rng;

use super::{DataError, Label, Result};
use crate::dsp::AudioClip;
use crate::seeds;

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;

const NOISE_COMPONENTS: usize = 60;
const NOISE_RMS: f64 = 0.03;
const TONE_AMPLITUDE: f64 = 0.15;

/// Generates one clip for `label` with `duration` seconds of audio.
pub fn synth_generate(label: Label, duration: f64, rng: &mut impl Rng) -> AudioClip {
    assert!(duration > 0.0, "duration must be positive");
    let rate = SYNTH_SAMPLE_RATE;
    let n = (duration * rate as f64).round() as usize;
    let mut samples = band_limited_noise(n, rate, rng);

    if matches!(label, Label::Crackle | Label::Both) {
        add_crackles(&mut samples, rate, duration, rng);
    }
    if matches!(label, Label::Wheeze | Label::Both) {
        add_wheeze(&mut samples, rate, duration, rng);
    }

    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.98 {
        let scale = 0.98 / peak;
        for s in &mut samples {
            *s *= scale;
        }
    }

    AudioClip::new(samples, rate, format!("synth-{}", label.name()))
}

/// [`synth_generate`] with its own seeded stream.
pub fn synth_generate_seeded(label: Label, duration: f64, seed: u64) -> AudioClip {
    let mut rng = seeds::rng(seeds::derive(seed, "synth"));
    synth_generate(label, duration, &mut rng)
}

/// A bank of random-phase sinusoids confined to 100–1000 Hz.
fn band_limited_noise(n: usize, rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let amplitude = NOISE_RMS * (2.0 / NOISE_COMPONENTS as f64).sqrt();
    let components: Vec<(f64, f64)> = (0..NOISE_COMPONENTS)
        .map(|_| {
            let freq = rng.random_range(100.0..1000.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (freq, phase)
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            components
                .iter()
                .map(|&(f, p)| amplitude * (std::f64::consts::TAU * f * t + p).sin())
                .sum()
        })
        .collect()
}

/// Damped high-frequency impulses, spaced widely enough to count as
/// separate short-time energy bursts.
fn add_crackles(samples: &mut [f64], rate: u32, duration: f64, rng: &mut impl Rng) {
    let cap = ((duration - 0.2) / 0.06).floor().max(5.0) as usize;
    let count = rng.random_range(5..=cap.clamp(5, 20));
    let slot = (duration - 0.12) / count as f64;
    for k in 0..count {
        let jitter = rng.random_range(-0.15..0.15) * slot;
        let onset = 0.06 + (k as f64 + 0.5) * slot + jitter;
        let amp = rng.random_range(0.6..0.85);
        let tau = rng.random_range(0.002..0.010);
        // keep impulse carriers clear of the 200-800 Hz wheeze band
        let carrier = rng.random_range(1200.0..3500.0);
        let start = (onset * rate as f64).round() as usize;
        let span = ((8.0 * tau) * rate as f64).round() as usize;
        for i in start..(start + span).min(samples.len()) {
            let dt = (i - start) as f64 / rate as f64;
            samples[i] += amp * (-dt / tau).exp() * (std::f64::consts::TAU * carrier * dt).sin();
        }
    }
}

/// A continuous tone with slow frequency drift covering >50% of the clip.
fn add_wheeze(samples: &mut [f64], rate: u32, duration: f64, rng: &mut impl Rng) {
    let f0 = rng.random_range(200.0..800.0);
    let coverage = rng.random_range(0.6..0.95);
    let start_t = rng.random_range(0.0..duration * (1.0 - coverage));
    let drift_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let start = (start_t * rate as f64).round() as usize;
    let len = (coverage * duration * rate as f64).round() as usize;
    let ramp = (0.01 * rate as f64) as usize; // 10 ms fade at both ends
    let mut phase = 0.0f64;
    for i in 0..len.min(samples.len() - start) {
        let t = i as f64 / rate as f64;
        // keep the drift inside 200-800 Hz: 4% swing around f0
        let freq = f0 * (1.0 + 0.04 * (std::f64::consts::TAU * 0.4 * t + drift_phase).sin());
        phase += std::f64::consts::TAU * freq / rate as f64;
        let fade_in = (i as f64 / ramp as f64).min(1.0);
        let fade_out = ((len - i) as f64 / ramp as f64).min(1.0);
        samples[start + i] += TONE_AMPLITUDE * fade_in * fade_out * phase.sin();
    }
}

/// One row of a synthetic dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub label: Label,
    pub seed: u64,
    pub duration: f64,
}

/// Parses a manifest CSV with header `id,class,seed,duration`.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| DataError::Parse {
            line: 1,
            detail: "empty manifest".into(),
        })?
        .1
        .trim();
    if header != "id,class,seed,duration" {
        return Err(DataError::Parse {
            line: 1,
            detail: format!("expected header `id,class,seed,duration`, found {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line: line_no,
                detail: format!("expected 4 comma-separated fields, found {}", fields.len()),
            });
        }
        let label = Label::from_name(fields[1].trim()).ok_or_else(|| DataError::Parse {
            line: line_no,
            detail: format!("unknown class {:?}", fields[1]),
        })?;
        let seed = fields[2].trim().parse::<u64>().map_err(|_| DataError::Parse {
            line: line_no,
            detail: format!("seed {:?} is not an unsigned integer", fields[2]),
        })?;
        let duration = fields[3].trim().parse::<f64>().map_err(|_| DataError::Parse {
            line: line_no,
            detail: format!("duration {:?} is not a decimal", fields[3]),
        })?;
        if duration <= 0.0 {
            return Err(DataError::Range {
                row: line_no,
                detail: format!("duration {duration} must be positive"),
            });
        }
        rows.push(ManifestRow {
            id: fields[0].trim().to_string(),
            label,
            seed,
            duration,
        });
    }
    Ok(rows)
}

pub fn manifest_to_csv(rows: &[ManifestRow]) -> String {
    let mut out = String::from("id,class,seed,duration\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.id,
            row.label.name(),
            row.seed,
            row.duration
        ));
    }
    out
}
