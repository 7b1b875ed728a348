//! Acoustic oracle detectors for the synthetic generator: a spectral-ridge
//! detector for the drifting tone and a short-time energy-burst counter for
//! the damped impulses. Together they must separate the four classes.

use auscult::data::{synth_generate_seeded, Label};
use auscult::dsp::{cyclic_pad, log_mel, mel_filterbank, AudioClip, MelConfig};

/// Ridge detector: one tone-band (150-900 Hz) mel bin's mean linear energy
/// dominating the median of the noise-band (100-1000 Hz) bins indicates a
/// sustained tone.
fn has_ridge(clip: &AudioClip) -> bool {
    let config = MelConfig::default();
    let padded = cyclic_pad(clip, 8.0).unwrap();
    let spec = log_mel(&padded, &config).unwrap();
    let bank = mel_filterbank(&config).unwrap();

    let mut in_band: Vec<f64> = Vec::new();
    let mut max_tone_band = 0.0f64;
    for m in 0..spec.bins {
        let mut mean = 0.0;
        for t in 0..spec.frames {
            mean += spec.at(m, t).exp();
        }
        mean /= spec.frames as f64;
        let hz = bank.centers_hz()[m];
        if (100.0..=1000.0).contains(&hz) {
            in_band.push(mean);
        }
        if (150.0..=900.0).contains(&hz) {
            max_tone_band = max_tone_band.max(mean);
        }
    }
    in_band.sort_by(f64::total_cmp);
    let median = in_band[in_band.len() / 2];
    max_tone_band > 3.0 * median
}

/// Burst counter: groups of 10 ms frames whose energy exceeds 4x the
/// clip's median frame energy.
fn count_bursts(clip: &AudioClip) -> usize {
    let window = 160usize; // 10 ms at 16 kHz
    let hop = 80usize;
    if clip.samples.len() < window {
        return 0;
    }
    let n_frames = 1 + (clip.samples.len() - window) / hop;
    let energies: Vec<f64> = (0..n_frames)
        .map(|t| {
            clip.samples[t * hop..t * hop + window]
                .iter()
                .map(|s| s * s)
                .sum::<f64>()
        })
        .collect();
    let mut sorted = energies.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let threshold = 4.0 * median;

    let mut bursts = 0;
    let mut inside = false;
    for &e in &energies {
        if e > threshold {
            if !inside {
                bursts += 1;
                inside = true;
            }
        } else {
            inside = false;
        }
    }
    bursts
}

fn classify(clip: &AudioClip) -> Label {
    let ridge = has_ridge(clip);
    let bursts = count_bursts(clip) >= 5;
    match (bursts, ridge) {
        (false, false) => Label::Normal,
        (true, false) => Label::Crackle,
        (false, true) => Label::Wheeze,
        (true, true) => Label::Both,
    }
}

#[test]
fn wheeze_clips_show_a_dominant_ridge() {
    for seed in 0..10 {
        let clip = synth_generate_seeded(Label::Wheeze, 3.0, seed);
        assert!(has_ridge(&clip), "seed {seed}");
    }
    for seed in 0..10 {
        let clip = synth_generate_seeded(Label::Normal, 3.0, seed);
        assert!(!has_ridge(&clip), "seed {seed}");
    }
}

#[test]
fn crackle_clips_show_at_least_five_bursts() {
    for seed in 0..10 {
        let clip = synth_generate_seeded(Label::Crackle, 3.0, seed);
        let bursts = count_bursts(&clip);
        assert!(bursts >= 5, "seed {seed}: {bursts} bursts");
    }
    for seed in 0..10 {
        let clip = synth_generate_seeded(Label::Normal, 3.0, seed);
        let bursts = count_bursts(&clip);
        assert!(bursts < 5, "seed {seed}: {bursts} bursts");
    }
}

#[test]
fn four_classes_are_separable_by_the_two_detectors() {
    // 200 seeded samples, 50 per class, mixed durations
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut confusion = std::collections::BTreeMap::new();
    for (c, label) in Label::ALL.into_iter().enumerate() {
        for k in 0..50u64 {
            let duration = 2.0 + (k % 4) as f64 * 0.75;
            let clip = synth_generate_seeded(label, duration, 1000 + c as u64 * 100 + k);
            let predicted = classify(&clip);
            if predicted == label {
                correct += 1;
            } else {
                *confusion.entry((label, predicted)).or_insert(0usize) += 1;
            }
            total += 1;
        }
    }
    let accuracy = correct as f64 / total as f64;
    assert!(
        accuracy >= 0.95,
        "detector accuracy {accuracy:.3}, confusions {confusion:?}"
    );
}
