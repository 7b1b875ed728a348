//! Minimal RIFF/WAVE codec: PCM16 and float32 decode, PCM16 encode.

use super::{AudioClip, DspError, Result};

fn decode_err(chunk: &str, detail: impl Into<String>) -> DspError {
    DspError::Decode {
        chunk: chunk.to_string(),
        detail: detail.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, chunk: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(decode_err(chunk, format!("truncated: wanted {n} more bytes")));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, chunk: &str) -> Result<u32> {
        let b = self.take(4, chunk)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tag(&mut self, chunk: &str) -> Result<[u8; 4]> {
        let b = self.take(4, chunk)?;
        Ok([b[0], b[1], b[2], b[3]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SampleCodec {
    Pcm16,
    Float32,
}

/// Decodes a RIFF/WAVE byte buffer into a mono clip.
///
/// PCM16 samples are scaled by 1/32768; stereo channels are averaged.
pub fn decode_wav(bytes: &[u8], source_id: impl Into<String>) -> Result<AudioClip> {
    let mut r = Reader { bytes, pos: 0 };

    if r.tag("RIFF")? != *b"RIFF" {
        return Err(decode_err("RIFF", "missing RIFF magic"));
    }
    let _riff_size = r.u32("RIFF")?;
    if r.tag("RIFF")? != *b"WAVE" {
        return Err(decode_err("RIFF", "missing WAVE form type"));
    }

    let mut format: Option<(SampleCodec, u16, u32, u16)> = None; // codec, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while r.pos + 8 <= bytes.len() {
        let id = r.tag("chunk")?;
        let size = r.u32("chunk")? as usize;
        let name = String::from_utf8_lossy(&id).into_owned();
        let body = r.take(size, &name)?;
        if size % 2 == 1 {
            // chunks are word-aligned
            let _ = r.take(1, &name);
        }
        match &id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(decode_err("fmt ", "chunk shorter than 16 bytes"));
                }
                let tag = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                let codec = match (tag, bits) {
                    (1, 16) => SampleCodec::Pcm16,
                    (3, 32) => SampleCodec::Float32,
                    _ => {
                        return Err(decode_err(
                            "fmt ",
                            format!("unsupported codec: format tag {tag}, {bits}-bit"),
                        ))
                    }
                };
                if channels == 0 || channels > 2 {
                    return Err(decode_err("fmt ", format!("unsupported channel count {channels}")));
                }
                if rate == 0 {
                    return Err(decode_err("fmt ", "zero sample rate"));
                }
                format = Some((codec, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {} // skip ancillary chunks (LIST, fact, ...)
        }
    }

    let (codec, channels, rate, _) = format.ok_or_else(|| decode_err("fmt ", "chunk missing"))?;
    let body = data.ok_or_else(|| decode_err("data", "chunk missing"))?;

    let bytes_per_sample = match codec {
        SampleCodec::Pcm16 => 2,
        SampleCodec::Float32 => 4,
    };
    let frame_size = bytes_per_sample * channels as usize;
    if body.len() % frame_size != 0 {
        return Err(decode_err(
            "data",
            format!("size {} is not a multiple of the {frame_size}-byte frame", body.len()),
        ));
    }

    let n_frames = body.len() / frame_size;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0;
        for ch in 0..channels as usize {
            let at = f * frame_size + ch * bytes_per_sample;
            let v = match codec {
                SampleCodec::Pcm16 => {
                    i16::from_le_bytes([body[at], body[at + 1]]) as f64 / 32768.0
                }
                SampleCodec::Float32 => f32::from_le_bytes([
                    body[at],
                    body[at + 1],
                    body[at + 2],
                    body[at + 3],
                ]) as f64,
            };
            acc += v;
        }
        samples.push(acc / channels as f64);
    }

    if samples.is_empty() {
        return Err(decode_err("data", "no samples"));
    }
    Ok(AudioClip {
        samples,
        sample_rate: rate,
        source_id: source_id.into(),
    })
}

/// Encodes a clip as 16-bit PCM WAV bytes, clamping to [-1, 1].
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}
