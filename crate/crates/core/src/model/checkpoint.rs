//! Checkpoint files.
//!
//! Little-endian binary layout, format version 1:
//!
//! ```text
//! magic "ASTC" | u32 version
//! u32 config_len | config record (u32 patch, embed, depth, heads, mlp_ratio,
//!                                 classes, bins, frames | f64 dropout)
//! u64 rng_seed | u32 epoch
//! u32 param_count | entries: u32 name_len, name, u32 ndim, u32 dims..., f64 data...
//! u8 has_optimizer | (u64 step | per-param first then second moments, f64 data)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, Result};
use crate::autodiff::Value;
use crate::optim::OptimizerState;
use crate::params::ParamSet;

const MAGIC: &[u8; 4] = b"ASTC";
const VERSION: u32 = 1;
const CONFIG_RECORD_LEN: u32 = 8 * 4 + 8;

/// A serialized training snapshot: architecture, parameters, optional
/// optimizer state, and the run seed / epoch counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub optimizer: Option<OptimizerState>,
    pub rng_seed: u64,
    pub epoch: u32,
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    w.write_all(&CONFIG_RECORD_LEN.to_le_bytes())?;
    let c = &checkpoint.config;
    for v in [
        c.patch_size,
        c.embed_dim,
        c.depth,
        c.heads,
        c.mlp_ratio,
        c.num_classes,
        c.input_bins,
        c.input_frames,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.dropout.to_le_bytes())?;

    w.write_all(&checkpoint.rng_seed.to_le_bytes())?;
    w.write_all(&checkpoint.epoch.to_le_bytes())?;

    w.write_all(&(checkpoint.params.len() as u32).to_le_bytes())?;
    for (name, value) in checkpoint.params.iter() {
        write_named_value(&mut w, name, value)?;
    }

    match &checkpoint.optimizer {
        None => w.write_all(&[0u8])?,
        Some(state) => {
            w.write_all(&[1u8])?;
            w.write_all(&state.step.to_le_bytes())?;
            for (_, value) in state.first_moment.iter() {
                write_data(&mut w, value)?;
            }
            for (_, value) in state.second_moment.iter() {
                write_data(&mut w, value)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_named_value(w: &mut impl Write, name: &str, value: &Value) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(value.shape().len() as u32).to_le_bytes())?;
    for &d in value.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    write_data(w, value)
}

fn write_data(w: &mut impl Write, value: &Value) -> Result<()> {
    for &v in value.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct CheckpointReader<R> {
    inner: R,
}

impl<R: Read> CheckpointReader<R> {
    fn bytes(&mut self, n: usize, context: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| ModelError::Truncated(context.to_string()))?;
        Ok(buf)
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        let b = self.bytes(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, context: &str) -> Result<u64> {
        let b = self.bytes(8, context)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, context: &str) -> Result<f64> {
        let b = self.bytes(8, context)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn data(&mut self, n: usize, context: &str) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8, context)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let mut r = CheckpointReader {
        inner: BufReader::new(File::open(path)?),
    };

    if r.bytes(4, "magic")? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: VERSION,
        });
    }

    let config_len = r.u32("config length")?;
    if config_len != CONFIG_RECORD_LEN {
        return Err(ModelError::ParamMismatch(format!(
            "config record of {config_len} bytes, expected {CONFIG_RECORD_LEN}"
        )));
    }
    let mut fields = [0usize; 8];
    for f in &mut fields {
        *f = r.u32("config")? as usize;
    }
    let dropout = r.f64("config")?;
    let config = ModelConfig {
        patch_size: fields[0],
        embed_dim: fields[1],
        depth: fields[2],
        heads: fields[3],
        mlp_ratio: fields[4],
        num_classes: fields[5],
        input_bins: fields[6],
        input_frames: fields[7],
        dropout,
    };
    config.validate()?;

    let rng_seed = r.u64("rng seed")?;
    let epoch = r.u32("epoch")?;

    let expected: Vec<(String, Vec<usize>)> = config.param_shapes();
    let param_count = r.u32("parameter count")? as usize;
    if param_count != expected.len() {
        return Err(ModelError::ParamMismatch(format!(
            "{param_count} parameters in file, architecture has {}",
            expected.len()
        )));
    }

    let mut params = ParamSet::new();
    for _ in 0..param_count {
        let name_len = r.u32("parameter name length")? as usize;
        let name = String::from_utf8(r.bytes(name_len, "parameter name")?)
            .map_err(|_| ModelError::ParamMismatch("non-utf8 parameter name".into()))?;
        let ndim = r.u32(&format!("{name} rank"))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32(&format!("{name} shape"))? as usize);
        }
        let expected_shape = expected
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| {
                ModelError::ParamMismatch(format!("unexpected parameter {name:?}"))
            })?;
        if shape != expected_shape {
            return Err(ModelError::ParamShape {
                name,
                found: shape,
                expected: expected_shape,
            });
        }
        let n: usize = shape.iter().product();
        let data = r.data(n, &format!("{name} data"))?;
        params.insert(name, Value::from_vec(shape, data));
    }
    for (name, _) in &expected {
        if !params.contains(name) {
            return Err(ModelError::ParamMismatch(format!(
                "parameter {name:?} missing from checkpoint"
            )));
        }
    }

    let has_optimizer = r.bytes(1, "optimizer flag")?[0];
    let optimizer = match has_optimizer {
        0 => None,
        1 => {
            let step = r.u64("optimizer step")?;
            let mut read_moments = |label: &str| -> Result<ParamSet> {
                let mut set = ParamSet::new();
                for (name, value) in params.iter() {
                    let data = r.data(value.len(), &format!("{label} moment {name}"))?;
                    set.insert(name, Value::from_vec(value.shape().to_vec(), data));
                }
                Ok(set)
            };
            let first_moment = read_moments("first")?;
            let second_moment = read_moments("second")?;
            Some(OptimizerState {
                first_moment,
                second_moment,
                step,
            })
        }
        other => {
            return Err(ModelError::ParamMismatch(format!(
                "invalid optimizer flag {other}"
            )))
        }
    };

    Ok(ModelCheckpoint {
        config,
        params,
        optimizer,
        rng_seed,
        epoch,
    })
}
