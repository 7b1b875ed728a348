//! Patch-based spectrogram transformer.
//!
//! A spectrogram is tiled into non-overlapping 16×16 patches, linearly
//! embedded, prefixed with a learned classification token, summed with
//! learned positional embeddings, and run through a stack of pre-norm
//! encoder blocks (multi-head self-attention + GELU MLP, both residual).
//! The classification token after the final layer norm is both the clip
//! embedding and the input to the linear class head.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Value};
use crate::dsp::Spectrogram;
use crate::optim::{OptimError, StepEval};
use crate::params::ParamSet;
use crate::seeds;

/// Epsilon inside every layer-norm square root.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint is not in ASTC format")]
    BadMagic,
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("checkpoint parameter {name:?} has shape {found:?} but the architecture expects {expected:?}")]
    ParamShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("checkpoint parameter set mismatch: {0}")]
    ParamMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture hyperparameters.
///
/// Defaults are desk-scale: 96-dim embedding, 4 blocks, 4 heads over the
/// 128×800 input produced by the default front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub input_bins: usize,
    pub input_frames: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            embed_dim: 96,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            num_classes: 4,
            input_bins: 128,
            input_frames: 800,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
            ("input_bins", self.input_bins),
            ("input_frames", self.input_frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.input_bins.is_multiple_of(self.patch_size)
            || !self.input_frames.is_multiple_of(self.patch_size)
        {
            return Err(ModelError::Config(format!(
                "input {}x{} not divisible by patch size {}",
                self.input_bins, self.input_frames, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        (self.input_bins / self.patch_size) * (self.input_frames / self.patch_size)
    }

    /// Sequence length including the classification token.
    pub fn seq_len(&self) -> usize {
        self.n_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Canonical (name, shape) list of every parameter, in the order they
    /// are created, saved, and validated.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let hidden = d * self.mlp_ratio;
        let mut out = vec![
            ("patch_embed.weight".into(), vec![self.patch_dim(), d]),
            ("patch_embed.bias".into(), vec![d]),
            ("cls_token".into(), vec![1, d]),
            ("pos_embed".into(), vec![self.seq_len(), d]),
        ];
        for b in 0..self.depth {
            let p = |suffix: &str| format!("blocks.{b}.{suffix}");
            out.push((p("ln1.gain"), vec![d]));
            out.push((p("ln1.bias"), vec![d]));
            for proj in ["wq", "wk", "wv", "wo"] {
                out.push((p(&format!("attn.{proj}")), vec![d, d]));
                out.push((p(&format!("attn.{}", proj.replace('w', "b"))), vec![d]));
            }
            out.push((p("ln2.gain"), vec![d]));
            out.push((p("ln2.bias"), vec![d]));
            out.push((p("mlp.w1"), vec![d, hidden]));
            out.push((p("mlp.b1"), vec![hidden]));
            out.push((p("mlp.w2"), vec![hidden, d]));
            out.push((p("mlp.b2"), vec![d]));
        }
        out.push(("norm.gain".into(), vec![d]));
        out.push(("norm.bias".into(), vec![d]));
        out.push(("head.weight".into(), vec![d, self.num_classes]));
        out.push(("head.bias".into(), vec![self.num_classes]));
        out
    }
}

/// Seed-determined initialization: truncated normal (sigma 0.02, cut at two
/// sigma) for weight matrices and positional embeddings, ones for layer-norm
/// gains, zeros for biases and the classification token.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = seeds::rng(seeds::derive(seed, "model-init"));
    let normal = Normal::new(0.0, 0.02).expect("valid sigma");
    let mut trunc = move || loop {
        let x: f64 = normal.sample(&mut rng);
        if x.abs() <= 0.04 {
            return x;
        }
    };

    let mut params = ParamSet::new();
    for (name, shape) in config.param_shapes() {
        let n: usize = shape.iter().product();
        let value = if name.ends_with(".gain") {
            Value::full(shape, 1.0)
        } else if name.ends_with("bias") || name == "cls_token" {
            Value::zeros(shape)
        } else {
            Value::from_vec(shape, (0..n).map(|_| trunc()).collect())
        };
        params.insert(name, value);
    }
    Ok(params)
}

/// Splits a spectrogram into flattened non-overlapping square patches.
///
/// Output row `i` is patch `(i / frame_blocks, i % frame_blocks)` in
/// (bin-block, frame-block) row-major order, itself flattened row-major.
pub fn patchify(spec: &Spectrogram, config: &ModelConfig) -> Result<Value> {
    if spec.bins != config.input_bins || spec.frames != config.input_frames {
        return Err(ModelError::Config(format!(
            "spectrogram {}x{} does not match configured input {}x{}",
            spec.bins, spec.frames, config.input_bins, config.input_frames
        )));
    }
    let ps = config.patch_size;
    if !spec.bins.is_multiple_of(ps) || !spec.frames.is_multiple_of(ps) {
        return Err(ModelError::Config(format!(
            "spectrogram {}x{} not divisible by patch size {ps}",
            spec.bins, spec.frames
        )));
    }
    let bin_blocks = spec.bins / ps;
    let frame_blocks = spec.frames / ps;
    let mut data = Vec::with_capacity(spec.bins * spec.frames);
    for bb in 0..bin_blocks {
        for fb in 0..frame_blocks {
            for r in 0..ps {
                let bin = bb * ps + r;
                let start = bin * spec.frames + fb * ps;
                data.extend_from_slice(&spec.values.data()[start..start + ps]);
            }
        }
    }
    Ok(Value::matrix(
        bin_blocks * frame_blocks,
        ps * ps,
        data,
    ))
}

/// Inverse of [`patchify`]: reassembles the `bins × frames` grid.
pub fn unpatchify(patches: &Value, config: &ModelConfig) -> Value {
    let ps = config.patch_size;
    let bin_blocks = config.input_bins / ps;
    let frame_blocks = config.input_frames / ps;
    let mut data = vec![0.0; config.input_bins * config.input_frames];
    for bb in 0..bin_blocks {
        for fb in 0..frame_blocks {
            let patch = (bb * frame_blocks + fb) * ps * ps;
            for r in 0..ps {
                let bin = bb * ps + r;
                let start = bin * config.input_frames + fb * ps;
                data[start..start + ps]
                    .copy_from_slice(&patches.data()[patch + r * ps..patch + (r + 1) * ps]);
            }
        }
    }
    Value::matrix(config.input_bins, config.input_frames, data)
}

/// Whether a forward pass applies dropout, and with which mask stream.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    Eval,
    /// Masks are fully determined by this seed; reusing the seed (as the
    /// two-step optimizer does) reproduces identical masks.
    Train { dropout_seed: u64 },
}

/// Parameters bound to a tape, aligned with [`ModelConfig::param_shapes`].
pub struct BoundParams {
    tensors: Vec<(String, Tensor)>,
}

impl BoundParams {
    fn get(&self, name: &str) -> &Tensor {
        &self
            .tensors
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
            .1
    }

    /// Collects accumulated gradients into a set aligned with the parameters.
    pub fn gradients(&self, grads: &crate::autodiff::Gradients) -> ParamSet {
        self.tensors
            .iter()
            .map(|(name, t)| (name.clone(), grads.get(t)))
            .collect()
    }
}

/// Binds every parameter as a differentiable leaf on `tape`.
pub fn bind(tape: &Tape, config: &ModelConfig, params: &ParamSet) -> Result<BoundParams> {
    bind_with(tape, config, params, true)
}

/// Binds every parameter as a frozen constant (evaluation).
pub fn bind_frozen(tape: &Tape, config: &ModelConfig, params: &ParamSet) -> Result<BoundParams> {
    bind_with(tape, config, params, false)
}

fn bind_with(
    tape: &Tape,
    config: &ModelConfig,
    params: &ParamSet,
    differentiable: bool,
) -> Result<BoundParams> {
    let mut tensors = Vec::new();
    for (name, shape) in config.param_shapes() {
        let value = params.get(&name).ok_or_else(|| {
            ModelError::ParamMismatch(format!("missing parameter {name:?}"))
        })?;
        if value.shape() != shape {
            return Err(ModelError::ParamShape {
                name,
                found: value.shape().to_vec(),
                expected: shape,
            });
        }
        let tensor = if differentiable {
            tape.param(value.clone())
        } else {
            tape.constant(value.clone())
        };
        tensors.push((name, tensor));
    }
    Ok(BoundParams { tensors })
}

/// Everything the forward pass exposes for one clip.
pub struct ClipForward {
    /// `[1, num_classes]` class scores.
    pub logits: Tensor,
    /// `[1, embed_dim]` classification-token representation after the final
    /// layer norm, upstream of the head.
    pub embedding: Tensor,
    /// `[seq, embed_dim]` token matrix after the final layer norm.
    pub encoded: Tensor,
    /// Per layer, per head `[seq, seq]` post-softmax attention weights.
    pub attention: Vec<Vec<Tensor>>,
}

struct DropoutStream {
    rng: Option<rand_chacha::ChaCha8Rng>,
    rate: f64,
}

impl DropoutStream {
    fn new(mode: &ForwardMode, clip_index: usize, rate: f64) -> Self {
        let rng = match mode {
            ForwardMode::Eval => None,
            ForwardMode::Train { dropout_seed } if rate > 0.0 => Some(seeds::rng(
                seeds::derive_indexed(*dropout_seed, "dropout-mask", clip_index as u64),
            )),
            ForwardMode::Train { .. } => None,
        };
        Self { rng, rate }
    }

    /// Applies inverted dropout when active, otherwise passes through.
    fn apply(&mut self, tape: &Tape, x: &Tensor) -> std::result::Result<Tensor, AutodiffError> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x.clone());
        };
        let shape = x.shape();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        x.mul(&tape.constant(Value::from_vec(shape, mask)))
    }
}

/// Runs one clip through the encoder on an existing tape.
///
/// `clip_index` keys the dropout stream so each batch element gets its own
/// masks while repeated evaluations of the same batch reuse them.
pub fn forward_clip(
    tape: &Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    spec: &Spectrogram,
    mode: &ForwardMode,
    clip_index: usize,
) -> Result<ClipForward> {
    config.validate()?;
    let patches = patchify(spec, config)?;
    let mut drop = DropoutStream::new(mode, clip_index, config.dropout);

    let x = tape.constant(patches);
    let x = x
        .matmul(bound.get("patch_embed.weight"))?
        .add_bias(bound.get("patch_embed.bias"))?;
    let mut tokens = tape.concat_rows(&[bound.get("cls_token").clone(), x])?;
    tokens = tokens.add(bound.get("pos_embed"))?;
    tokens = drop.apply(tape, &tokens)?;

    let heads = config.heads;
    let head_dim = config.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut attention = Vec::with_capacity(config.depth);

    for b in 0..config.depth {
        let p = |suffix: &str| format!("blocks.{b}.{suffix}");

        let normed = tokens.layer_norm(
            bound.get(&p("ln1.gain")),
            bound.get(&p("ln1.bias")),
            LN_EPS,
        )?;
        let q = normed
            .matmul(bound.get(&p("attn.wq")))?
            .add_bias(bound.get(&p("attn.bq")))?;
        let k = normed
            .matmul(bound.get(&p("attn.wk")))?
            .add_bias(bound.get(&p("attn.bk")))?;
        let v = normed
            .matmul(bound.get(&p("attn.wv")))?
            .add_bias(bound.get(&p("attn.bv")))?;

        let mut layer_attn = Vec::with_capacity(heads);
        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * head_dim..(h + 1) * head_dim;
            let qh = q.slice_cols(cols.clone())?;
            let kh = k.slice_cols(cols.clone())?;
            let vh = v.slice_cols(cols)?;
            let weights = qh.matmul(&kh.transpose()?)?.scale(scale).softmax(1)?;
            layer_attn.push(weights.clone());
            let weights = drop.apply(tape, &weights)?;
            head_outputs.push(weights.matmul(&vh)?);
        }
        attention.push(layer_attn);

        let merged = tape.concat_cols(&head_outputs)?;
        let projected = merged
            .matmul(bound.get(&p("attn.wo")))?
            .add_bias(bound.get(&p("attn.bo")))?;
        let projected = drop.apply(tape, &projected)?;
        tokens = tokens.add(&projected)?;

        let normed = tokens.layer_norm(
            bound.get(&p("ln2.gain")),
            bound.get(&p("ln2.bias")),
            LN_EPS,
        )?;
        let hidden = normed
            .matmul(bound.get(&p("mlp.w1")))?
            .add_bias(bound.get(&p("mlp.b1")))?
            .gelu();
        let hidden = drop.apply(tape, &hidden)?;
        let mlp_out = hidden
            .matmul(bound.get(&p("mlp.w2")))?
            .add_bias(bound.get(&p("mlp.b2")))?;
        let mlp_out = drop.apply(tape, &mlp_out)?;
        tokens = tokens.add(&mlp_out)?;
    }

    let final_norm = tokens.layer_norm(bound.get("norm.gain"), bound.get("norm.bias"), LN_EPS)?;
    let embedding = final_norm.slice_rows(0..1)?;
    let logits = embedding
        .matmul(bound.get("head.weight"))?
        .add_bias(bound.get("head.bias"))?;

    Ok(ClipForward {
        logits,
        embedding,
        encoded: final_norm,
        attention,
    })
}

/// Forward + cross-entropy + backward over a batch, packaged for the
/// optimizer's loss-builder interface.
pub fn batch_eval(
    params: &ParamSet,
    config: &ModelConfig,
    batch: &[(&Spectrogram, usize)],
    mode: &ForwardMode,
) -> Result<StepEval> {
    assert!(!batch.is_empty(), "empty batch");
    let tape = Tape::new();
    let bound = bind(&tape, config, params)?;
    let mut rows = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for (i, (spec, label)) in batch.iter().enumerate() {
        let pass = forward_clip(&tape, &bound, config, spec, mode, i)?;
        rows.push(pass.logits);
        labels.push(*label);
    }
    let logits = tape.concat_rows(&rows)?;
    let loss = logits.cross_entropy(&labels)?;
    let grads = loss.backward()?;
    Ok(StepEval {
        loss: loss.value().item(),
        grads: bound.gradients(&grads),
    })
}

/// Adapts [`batch_eval`] to the optimizer's error type.
pub fn loss_builder<'a>(
    config: &'a ModelConfig,
    batch: &'a [(&'a Spectrogram, usize)],
    mode: ForwardMode,
) -> impl FnMut(&ParamSet) -> std::result::Result<StepEval, OptimError> + 'a {
    move |params: &ParamSet| {
        batch_eval(params, config, batch, &mode).map_err(|e| OptimError::Eval(e.to_string()))
    }
}

/// Deterministic evaluation-mode logits for one clip.
pub fn predict_logits(params: &ParamSet, config: &ModelConfig, spec: &Spectrogram) -> Result<Value> {
    let tape = Tape::new();
    let bound = bind_frozen(&tape, config, params)?;
    let pass = forward_clip(&tape, &bound, config, spec, &ForwardMode::Eval, 0)?;
    Ok(pass.logits.value())
}

/// The `[embed_dim]` classification-token embedding for one clip.
pub fn extract_embedding(
    params: &ParamSet,
    config: &ModelConfig,
    spec: &Spectrogram,
) -> Result<Value> {
    let tape = Tape::new();
    let bound = bind_frozen(&tape, config, params)?;
    let pass = forward_clip(&tape, &bound, config, spec, &ForwardMode::Eval, 0)?;
    let v = pass.embedding.value();
    Ok(Value::vector(v.data()))
}

/// Post-softmax attention weights: `depth × heads` matrices of `[seq, seq]`.
pub fn export_attention(
    params: &ParamSet,
    config: &ModelConfig,
    spec: &Spectrogram,
) -> Result<Vec<Vec<Value>>> {
    let tape = Tape::new();
    let bound = bind_frozen(&tape, config, params)?;
    let pass = forward_clip(&tape, &bound, config, spec, &ForwardMode::Eval, 0)?;
    Ok(pass
        .attention
        .iter()
        .map(|layer| layer.iter().map(Tensor::value).collect())
        .collect())
}
