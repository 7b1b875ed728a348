//! Spectrogram cache files.
//!
//! Little-endian binary layout: magic `SPG1`, `u32` bins, `u32` frames,
//! `f64` hop seconds, then `bins × frames` row-major `f64` values.

use std::io::{Read, Write};

use super::{DspError, MelConfig, Result, Spectrogram};
use crate::autodiff::Value;

const MAGIC: &[u8; 4] = b"SPG1";

pub fn write_spectrogram(spec: &Spectrogram, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(spec.bins as u32).to_le_bytes())?;
    w.write_all(&(spec.frames as u32).to_le_bytes())?;
    w.write_all(&spec.hop_seconds.to_le_bytes())?;
    for &v in spec.values.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a cached spectrogram. The mel configuration is not stored in the
/// file; the caller supplies the configuration the cache was built with.
pub fn read_spectrogram(mut r: impl Read, mel: MelConfig) -> Result<Spectrogram> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DspError::Input(format!(
            "not a spectrogram file: magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let bins = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let frames = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hop_seconds = f64::from_le_bytes(b8);

    let mut data = Vec::with_capacity(bins * frames);
    for _ in 0..bins * frames {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok(Spectrogram {
        bins,
        frames,
        values: Value::matrix(bins, frames, data),
        hop_seconds,
        mel,
    })
}
