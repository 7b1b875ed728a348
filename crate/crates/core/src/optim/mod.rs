//! Optimizers: SGD, AdamW, and a sharpness-aware two-step wrapper.
//!
//! The sharpness-aware step treats the loss as a min-max objective: it first
//! climbs to the worst point within a Euclidean ball of radius `rho` around
//! the current weights (along the normalized gradient), then descends using
//! the gradient evaluated at that perturbed point. The perturbation uses the
//! global gradient norm over the concatenation of all parameters, not
//! per-tensor norms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Value;
use crate::params::ParamSet;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("{op}: parameter {name:?} has shape {param:?} but gradient has shape {grad:?}")]
    ShapeMismatch {
        op: &'static str,
        name: String,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("{op}: no gradient entry for parameter {name:?}")]
    MissingGradient { op: &'static str, name: String },
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("loss evaluation failed: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, OptimError>;

/// Raised when every gradient entry is zero: the ascent direction of the
/// perturbation is undefined and the caller falls back to a plain base step.
#[derive(Debug, Error)]
#[error("all-zero gradient: perturbation direction undefined")]
pub struct DegenerateGradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Sgd,
    AdamW,
}

/// Optimizer hyperparameters.
///
/// Defaults: AdamW, lr 1e-5, weight decay 1e-4, betas (0.9, 0.999),
/// eps 1e-8, sharpness-aware wrapping enabled with rho 0.05.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub base: BaseKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Enables the two-step min-max wrapper around the base optimizer.
    pub sam: bool,
    /// Euclidean radius of the perturbation neighborhood.
    pub rho: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base: BaseKind::AdamW,
            learning_rate: 1e-5,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sam: true,
            rho: 0.05,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(OptimError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(OptimError::Config("weight_decay must be nonnegative".into()));
        }
        if self.sam && self.rho < 0.0 {
            return Err(OptimError::Config("rho must be nonnegative".into()));
        }
        Ok(())
    }

    /// Whether steps actually perturb: `rho == 0` degenerates to the base
    /// optimizer exactly.
    pub fn sam_active(&self) -> bool {
        self.sam && self.rho > 0.0
    }
}

/// Per-parameter first/second moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: ParamSet,
    pub second_moment: ParamSet,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }
}

/// One evaluation of the training loss: value plus gradients at the
/// evaluation point.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub loss: f64,
    pub grads: ParamSet,
}

/// Diagnostics returned by [`sam_step`].
#[derive(Debug, Clone, Copy)]
pub struct SamMetrics {
    /// Loss at the unperturbed weights.
    pub loss: f64,
    /// Loss at the perturbed weights, when a perturbation was taken.
    pub perturbed_loss: Option<f64>,
    /// `loss(w + eps) - loss(w)`; zero when no perturbation was taken.
    pub sharpness: f64,
    /// True when an all-zero gradient forced the plain-base-step fallback.
    pub degenerate: bool,
}

fn check_aligned(op: &'static str, params: &ParamSet, grads: &ParamSet) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads.get(name).ok_or_else(|| OptimError::MissingGradient {
            op,
            name: name.to_string(),
        })?;
        if g.shape() != p.shape() {
            return Err(OptimError::ShapeMismatch {
                op,
                name: name.to_string(),
                param: p.shape().to_vec(),
                grad: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Plain SGD with additive decoupled weight decay:
/// `w <- w - lr * (g + wd * w)`.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, config: &OptimizerConfig) -> Result<()> {
    check_aligned("sgd_step", params, grads)?;
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("aligned");
        for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * (gv + wd * *w);
        }
    }
    Ok(())
}

/// Bias-corrected Adam with decoupled weight decay.
pub fn adamw_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
) -> Result<()> {
    check_aligned("adamw_step", params, grads)?;
    check_aligned("adamw_step", params, &state.first_moment)?;
    state.step += 1;
    let t = state.step as i32;
    let lr = config.learning_rate;
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("aligned");
        let m = state.first_moment.get_mut(name).expect("aligned");
        let v = state.second_moment.get_mut(name).expect("aligned");
        for i in 0..p.len() {
            let gv = g.data()[i];
            m.data_mut()[i] = b1 * m.data()[i] + (1.0 - b1) * gv;
            v.data_mut()[i] = b2 * v.data()[i] + (1.0 - b2) * gv * gv;
            let m_hat = m.data()[i] / bias1;
            let v_hat = v.data()[i] / bias2;
            let w = p.data()[i];
            p.data_mut()[i] =
                w - lr * (m_hat / (v_hat.sqrt() + config.eps) + config.weight_decay * w);
        }
    }
    Ok(())
}

/// One step of the configured base optimizer.
pub fn base_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
) -> Result<()> {
    match config.base {
        BaseKind::Sgd => sgd_step(params, grads, config),
        BaseKind::AdamW => adamw_step(params, grads, state, config),
    }
}

/// The ascent perturbation `eps = rho * g / ||g||`, normalized by the global
/// Euclidean norm over all parameter gradients jointly.
pub fn sam_perturbation(
    grads: &ParamSet,
    rho: f64,
) -> std::result::Result<ParamSet, DegenerateGradient> {
    let norm = grads.global_l2_norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DegenerateGradient);
    }
    let scale = rho / norm;
    let mut out = ParamSet::new();
    for (name, g) in grads.iter() {
        out.insert(name, g.map(|x| x * scale));
    }
    Ok(out)
}

/// One two-step min-max update.
///
/// 1. evaluate loss and gradient at `w`
/// 2. climb to `w + eps` along the normalized gradient
/// 3. evaluate the gradient there
/// 4. restore `w` exactly (from a saved copy) and take the base step using
///    the perturbed gradient
///
/// With `rho == 0` (or the wrapper disabled) this is bit-identical to the
/// base optimizer. An all-zero gradient falls back to a plain base step.
/// `eval` must be re-evaluable on the same batch; any stochastic masks must
/// be keyed so both evaluations see identical noise.
pub fn sam_step<F>(
    mut eval: F,
    params: &mut ParamSet,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
) -> Result<SamMetrics>
where
    F: FnMut(&ParamSet) -> Result<StepEval>,
{
    let at_w = eval(params)?;
    if !config.sam_active() {
        base_step(params, &at_w.grads, state, config)?;
        return Ok(SamMetrics {
            loss: at_w.loss,
            perturbed_loss: None,
            sharpness: 0.0,
            degenerate: false,
        });
    }

    match sam_perturbation(&at_w.grads, config.rho) {
        Err(DegenerateGradient) => {
            base_step(params, &at_w.grads, state, config)?;
            Ok(SamMetrics {
                loss: at_w.loss,
                perturbed_loss: None,
                sharpness: 0.0,
                degenerate: true,
            })
        }
        Ok(eps) => {
            let saved = params.clone();
            for (name, p) in params.iter_mut() {
                p.add_scaled(eps.get(name).expect("aligned"), 1.0);
            }
            let perturbed = eval(params)?;
            *params = saved;
            base_step(params, &perturbed.grads, state, config)?;
            Ok(SamMetrics {
                loss: at_w.loss,
                perturbed_loss: Some(perturbed.loss),
                sharpness: perturbed.loss - at_w.loss,
                degenerate: false,
            })
        }
    }
}

/// Flatness diagnostic: loss increase along the normalized ascent direction.
#[derive(Debug, Clone, Copy)]
pub struct SharpnessEstimate {
    /// `loss(w + rho * g/||g||) - loss(w)`.
    pub estimate: f64,
    /// True when the gradient was all-zero and the estimate is trivially 0.
    pub degenerate: bool,
}

/// Probes loss-surface sharpness at `params` without updating them.
pub fn sharpness_probe<F>(mut eval: F, params: &ParamSet, rho: f64) -> Result<SharpnessEstimate>
where
    F: FnMut(&ParamSet) -> Result<StepEval>,
{
    let at_w = eval(params)?;
    match sam_perturbation(&at_w.grads, rho) {
        Err(DegenerateGradient) => Ok(SharpnessEstimate {
            estimate: 0.0,
            degenerate: true,
        }),
        Ok(eps) => {
            let mut shifted = params.clone();
            for (name, p) in shifted.iter_mut() {
                p.add_scaled(eps.get(name).expect("aligned"), 1.0);
            }
            let perturbed = eval(&shifted)?;
            Ok(SharpnessEstimate {
                estimate: perturbed.loss - at_w.loss,
                degenerate: false,
            })
        }
    }
}

/// Wraps an explicit scalar function and derivative into a [`StepEval`]
/// builder over a single parameter named `w`. Used by 1-D landscape tests.
pub fn scalar_landscape(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> impl FnMut(&ParamSet) -> Result<StepEval> {
    move |params: &ParamSet| {
        let w = params.get("w").expect("scalar landscape parameter").data()[0];
        let mut grads = ParamSet::new();
        grads.insert("w", Value::vector(&[df(w)]));
        Ok(StepEval { loss: f(w), grads })
    }
}

/// A single-parameter set for scalar landscapes.
pub fn scalar_params(w: f64) -> ParamSet {
    let mut params = ParamSet::new();
    params.insert("w", Value::vector(&[w]));
    params
}
