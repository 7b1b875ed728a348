//! Reverse-mode automatic differentiation on a dynamic tape.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding the
//! operation kind, input node ids, and the cached forward value. Nodes are
//! appended in execution order, so the insertion order is already a
//! topological order and [`Tensor::backward`] is a single reverse sweep.
//!
//! The tape is rebuilt for every training step (a "dynamic" tape). Values are
//! plain row-major `f64` buffers ([`Value`]); a `Tensor` is a cheap handle
//! (tape pointer + node id) into the currently recording tape.
//!
//! Gradient accumulation order is fixed by node insertion order, so replaying
//! a graph with identical inputs is bit-identical.

mod check;
mod value;

pub use check::{grad_check, grad_check_against, GradCheckReport};
pub use value::Value;

use std::cell::RefCell;
use std::fmt;
use std::ops::Range;
use std::rc::Rc;

use thiserror::Error;

/// Errors raised while building or differentiating a computation graph.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: slice {start}..{end} out of range for extent {extent}")]
    SliceOutOfRange {
        op: &'static str,
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("label {label} at position {index} out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op}: operands belong to different tapes")]
    TapeMismatch { op: &'static str },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Mul,
    Scale(f64),
    Matmul,
    Transpose,
    Softmax { axis: usize },
    LayerNorm { eps: f64 },
    Gelu,
    Sum,
    AddBias,
    ConcatRows { row_counts: Vec<usize> },
    ConcatCols { col_counts: Vec<usize> },
    SliceRows { range: Range<usize> },
    SliceCols { range: Range<usize> },
    CrossEntropy { labels: Vec<usize> },
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Value,
    requires_grad: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// The recording tape. Cloning produces another handle to the same tape.
///
/// A tape is confined to one thread and one training step; parameters enter
/// as leaves via [`Tape::param`] and inputs via [`Tape::constant`].
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf (model parameter).
    pub fn param(&self, value: Value) -> Tensor {
        self.push(Op::Leaf, vec![], value, true)
    }

    /// A non-differentiable leaf (input data, dropout masks, ...).
    pub fn constant(&self, value: Value) -> Tensor {
        self.push(Op::Leaf, vec![], value, false)
    }

    fn push(&self, op: Op, inputs: Vec<usize>, value: Value, requires_grad: bool) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Tensor {
            tape: self.clone(),
            id,
        }
    }

    fn same_tape(&self, other: &Tape, op: &'static str) -> Result<()> {
        if Rc::ptr_eq(&self.inner, &other.inner) {
            Ok(())
        } else {
            Err(AutodiffError::TapeMismatch { op })
        }
    }

    /// Stacks 2-D tensors along the row axis.
    pub fn concat_rows(&self, parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_rows needs at least one input");
        let mut cols = None;
        let mut row_counts = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        let mut requires_grad = false;
        {
            let inner = self.inner.borrow();
            for part in parts {
                self.same_tape(&part.tape, "concat_rows")?;
                let node = &inner.nodes[part.id];
                let c = node.value.cols();
                if *cols.get_or_insert(c) != c {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat_rows",
                        lhs: vec![cols.unwrap()],
                        rhs: node.value.shape().to_vec(),
                    });
                }
                row_counts.push(node.value.rows());
                data.extend_from_slice(node.value.data());
                requires_grad |= node.requires_grad;
            }
        }
        let rows: usize = row_counts.iter().sum();
        let value = Value::matrix(rows, cols.unwrap(), data);
        Ok(self.push(
            Op::ConcatRows { row_counts },
            parts.iter().map(|t| t.id).collect(),
            value,
            requires_grad,
        ))
    }

    /// Stacks 2-D tensors along the column axis.
    pub fn concat_cols(&self, parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols needs at least one input");
        let mut rows = None;
        let mut col_counts = Vec::with_capacity(parts.len());
        let mut requires_grad = false;
        let value = {
            let inner = self.inner.borrow();
            for part in parts {
                self.same_tape(&part.tape, "concat_cols")?;
                let node = &inner.nodes[part.id];
                let r = node.value.rows();
                if *rows.get_or_insert(r) != r {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat_cols",
                        lhs: vec![rows.unwrap()],
                        rhs: node.value.shape().to_vec(),
                    });
                }
                col_counts.push(node.value.cols());
                requires_grad |= node.requires_grad;
            }
            let rows = rows.unwrap();
            let total_cols: usize = col_counts.iter().sum();
            let mut data = vec![0.0; rows * total_cols];
            let mut offset = 0;
            for part in parts {
                let v = &inner.nodes[part.id].value;
                let c = v.cols();
                for r in 0..rows {
                    data[r * total_cols + offset..r * total_cols + offset + c]
                        .copy_from_slice(&v.data()[r * c..(r + 1) * c]);
                }
                offset += c;
            }
            Value::matrix(rows, total_cols, data)
        };
        Ok(self.push(
            Op::ConcatCols { col_counts },
            parts.iter().map(|t| t.id).collect(),
            value,
            requires_grad,
        ))
    }
}

/// A handle to one node of a [`Tape`].
///
/// Tensors are cheap to clone; the payload lives on the tape. Values are
/// immutable once written by the forward pass.
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(id={}, shape={:?})", self.id, self.shape())
    }
}

impl Tensor {
    /// Node id within the owning tape.
    pub fn id(&self) -> usize {
        self.id
    }

    /// Copies this node's forward value off the tape.
    pub fn value(&self) -> Value {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id]
            .value
            .shape()
            .to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    fn with_value<R>(&self, f: impl FnOnce(&Value) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.id].value)
    }

    fn binary(
        &self,
        other: &Tensor,
        op: Op,
        op_name: &'static str,
        f: impl FnOnce(&Value, &Value) -> Result<Value>,
    ) -> Result<Tensor> {
        self.tape.same_tape(&other.tape, op_name)?;
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            (f(&a.value, &b.value)?, a.requires_grad || b.requires_grad)
        };
        Ok(self
            .tape
            .push(op, vec![self.id, other.id], value, requires_grad))
    }

    /// Element-wise addition of same-shape tensors.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Add, "add", |a, b| {
            if a.shape() != b.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "add",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let mut out = a.clone();
            out.add_scaled(b, 1.0);
            Ok(out)
        })
    }

    /// `self - other`, element-wise.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.add(&other.scale(-1.0))
    }

    /// Element-wise (Hadamard) product of same-shape tensors.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, "mul", |a, b| {
            if a.shape() != b.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "mul",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| x * y)
                .collect();
            Ok(Value::from_vec(a.shape().to_vec(), data))
        })
    }

    /// Multiplication by a compile-time scalar.
    pub fn scale(&self, c: f64) -> Tensor {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            (node.value.map(|x| x * c), node.requires_grad)
        };
        self.tape
            .push(Op::Scale(c), vec![self.id], value, requires_grad)
    }

    /// Matrix product of a `[m×k]` and a `[k×n]` tensor.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Matmul, "matmul", |a, b| {
            if a.shape().len() != 2 {
                return Err(AutodiffError::RankMismatch {
                    op: "matmul",
                    expected: 2,
                    shape: a.shape().to_vec(),
                });
            }
            if b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matmul",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            Ok(matmul_fwd(a, b))
        })
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            if node.value.shape().len() != 2 {
                return Err(AutodiffError::RankMismatch {
                    op: "transpose",
                    expected: 2,
                    shape: node.value.shape().to_vec(),
                });
            }
            (transpose_fwd(&node.value), node.requires_grad)
        };
        Ok(self
            .tape
            .push(Op::Transpose, vec![self.id], value, requires_grad))
    }

    /// Numerically stable softmax along `axis`; slices along the axis sum to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            if axis >= node.value.shape().len() {
                return Err(AutodiffError::AxisOutOfRange {
                    op: "softmax",
                    axis,
                    shape: node.value.shape().to_vec(),
                });
            }
            (softmax_fwd(&node.value, axis), node.requires_grad)
        };
        Ok(self
            .tape
            .push(Op::Softmax { axis }, vec![self.id], value, requires_grad))
    }

    /// Row-wise layer normalization with learned gain and bias.
    ///
    /// Rows are the last axis; each row is centered and scaled to unit
    /// variance (population variance, `eps` inside the square root) before
    /// the affine `gain * x + bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        self.tape.same_tape(&gain.tape, "layer_norm")?;
        self.tape.same_tape(&bias.tape, "layer_norm")?;
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.nodes[self.id];
            let g = &inner.nodes[gain.id];
            let b = &inner.nodes[bias.id];
            let cols = x.value.cols();
            if g.value.len() != cols || b.value.len() != cols {
                return Err(AutodiffError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: x.value.shape().to_vec(),
                    rhs: g.value.shape().to_vec(),
                });
            }
            let value = layer_norm_fwd(&x.value, &g.value, &b.value, eps);
            let rg = x.requires_grad || g.requires_grad || b.requires_grad;
            (value, rg)
        };
        Ok(self.tape.push(
            Op::LayerNorm { eps },
            vec![self.id, gain.id, bias.id],
            value,
            requires_grad,
        ))
    }

    /// Exact Gaussian-CDF GELU: `x * Phi(x)`.
    pub fn gelu(&self) -> Tensor {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            (node.value.map(|x| x * norm_cdf(x)), node.requires_grad)
        };
        self.tape
            .push(Op::Gelu, vec![self.id], value, requires_grad)
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            (
                Value::scalar(node.value.data().iter().sum()),
                node.requires_grad,
            )
        };
        self.tape.push(Op::Sum, vec![self.id], value, requires_grad)
    }

    /// Mean of all elements, as a scalar tensor.
    pub fn mean(&self) -> Tensor {
        let n = self.with_value(|v| v.len());
        self.sum().scale(1.0 / n as f64)
    }

    /// Adds a length-`c` bias vector to every row of a `[r×c]` tensor.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        self.binary(bias, Op::AddBias, "add_bias", |a, b| {
            let cols = a.cols();
            if b.len() != cols {
                return Err(AutodiffError::ShapeMismatch {
                    op: "add_bias",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let mut out = a.clone();
            for r in 0..a.rows() {
                for c in 0..cols {
                    out.data_mut()[r * cols + c] += b.data()[c];
                }
            }
            Ok(out)
        })
    }

    /// Contiguous row slice of a 2-D tensor.
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Tensor> {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let rows = node.value.rows();
            let cols = node.value.cols();
            if range.start >= range.end || range.end > rows {
                return Err(AutodiffError::SliceOutOfRange {
                    op: "slice_rows",
                    start: range.start,
                    end: range.end,
                    extent: rows,
                });
            }
            let data = node.value.data()[range.start * cols..range.end * cols].to_vec();
            (
                Value::matrix(range.end - range.start, cols, data),
                node.requires_grad,
            )
        };
        Ok(self.tape.push(
            Op::SliceRows { range },
            vec![self.id],
            value,
            requires_grad,
        ))
    }

    /// Contiguous column slice of a 2-D tensor.
    pub fn slice_cols(&self, range: Range<usize>) -> Result<Tensor> {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let rows = node.value.rows();
            let cols = node.value.cols();
            if range.start >= range.end || range.end > cols {
                return Err(AutodiffError::SliceOutOfRange {
                    op: "slice_cols",
                    start: range.start,
                    end: range.end,
                    extent: cols,
                });
            }
            let width = range.end - range.start;
            let mut data = Vec::with_capacity(rows * width);
            for r in 0..rows {
                data.extend_from_slice(&node.value.data()[r * cols + range.start..r * cols + range.end]);
            }
            (Value::matrix(rows, width, data), node.requires_grad)
        };
        Ok(self.tape.push(
            Op::SliceCols { range },
            vec![self.id],
            value,
            requires_grad,
        ))
    }

    /// Mean cross-entropy of `[B×K]` logits against class indices.
    ///
    /// Log-sum-exp stabilized; the gradient is `(softmax(logits) - onehot)/B`.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let (value, requires_grad) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            let rows = node.value.rows();
            let cols = node.value.cols();
            if labels.len() != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "cross_entropy",
                    lhs: node.value.shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
            for (i, &label) in labels.iter().enumerate() {
                if label >= cols {
                    return Err(AutodiffError::LabelOutOfRange {
                        index: i,
                        label,
                        classes: cols,
                    });
                }
            }
            let mut total = 0.0;
            for (r, &label) in labels.iter().enumerate() {
                let row = &node.value.data()[r * cols..(r + 1) * cols];
                total += log_sum_exp(row) - row[label];
            }
            (Value::scalar(total / rows as f64), node.requires_grad)
        };
        Ok(self.tape.push(
            Op::CrossEntropy {
                labels: labels.to_vec(),
            },
            vec![self.id],
            value,
            requires_grad,
        ))
    }

    /// Reverse sweep from a scalar loss; returns accumulated gradients.
    pub fn backward(&self) -> Result<Gradients> {
        let inner = self.tape.inner.borrow();
        let nodes = &inner.nodes;
        let loss = &nodes[self.id];
        if !loss.value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: loss.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Value>> = (0..nodes.len()).map(|_| None).collect();
        grads[self.id] = Some(Value::scalar(1.0));

        for id in (0..=self.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            backward_node(node, &grad, nodes, &mut grads);
            grads[id] = Some(grad);
        }

        Ok(Gradients { grads })
    }
}

/// Gradient map produced by [`Tensor::backward`], keyed by node id.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `tensor`; zero-filled when the
    /// tensor is unreachable from the loss.
    pub fn get(&self, tensor: &Tensor) -> Value {
        match self.grads.get(tensor.id) {
            Some(Some(g)) => g.clone(),
            _ => Value::zeros(tensor.shape()),
        }
    }

    /// Whether any gradient actually reached `tensor`.
    pub fn reached(&self, tensor: &Tensor) -> bool {
        matches!(self.grads.get(tensor.id), Some(Some(_)))
    }
}

fn accumulate(slot: &mut Option<Value>, contribution: Value) {
    match slot {
        Some(existing) => existing.add_scaled(&contribution, 1.0),
        None => *slot = Some(contribution),
    }
}

fn backward_node(node: &Node, grad: &Value, nodes: &[Node], grads: &mut [Option<Value>]) {
    let input_rg = |i: usize| nodes[node.inputs[i]].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add => {
            for slot in 0..2 {
                if input_rg(slot) {
                    accumulate(&mut grads[node.inputs[slot]], grad.clone());
                }
            }
        }
        Op::Mul => {
            let a = &nodes[node.inputs[0]].value;
            let b = &nodes[node.inputs[1]].value;
            if input_rg(0) {
                let data = grad.data().iter().zip(b.data()).map(|(g, y)| g * y).collect();
                accumulate(
                    &mut grads[node.inputs[0]],
                    Value::from_vec(a.shape().to_vec(), data),
                );
            }
            if input_rg(1) {
                let data = grad.data().iter().zip(a.data()).map(|(g, x)| g * x).collect();
                accumulate(
                    &mut grads[node.inputs[1]],
                    Value::from_vec(b.shape().to_vec(), data),
                );
            }
        }
        Op::Scale(c) => {
            if input_rg(0) {
                accumulate(&mut grads[node.inputs[0]], grad.map(|g| g * c));
            }
        }
        Op::Matmul => {
            let a = &nodes[node.inputs[0]].value;
            let b = &nodes[node.inputs[1]].value;
            if input_rg(0) {
                accumulate(&mut grads[node.inputs[0]], matmul_grad_lhs(grad, b));
            }
            if input_rg(1) {
                accumulate(&mut grads[node.inputs[1]], matmul_grad_rhs(a, grad));
            }
        }
        Op::Transpose => {
            if input_rg(0) {
                accumulate(&mut grads[node.inputs[0]], transpose_fwd(grad));
            }
        }
        Op::Softmax { axis } => {
            if input_rg(0) {
                accumulate(
                    &mut grads[node.inputs[0]],
                    softmax_backward(&node.value, grad, *axis),
                );
            }
        }
        Op::LayerNorm { eps } => {
            let x = &nodes[node.inputs[0]].value;
            let gain = &nodes[node.inputs[1]].value;
            let (dx, dgain, dbias) = layer_norm_backward(x, gain, grad, *eps);
            if input_rg(0) {
                accumulate(&mut grads[node.inputs[0]], dx);
            }
            if input_rg(1) {
                accumulate(&mut grads[node.inputs[1]], dgain);
            }
            if input_rg(2) {
                accumulate(&mut grads[node.inputs[2]], dbias);
            }
        }
        Op::Gelu => {
            if input_rg(0) {
                let x = &nodes[node.inputs[0]].value;
                let data = x
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&x, &g)| g * (norm_cdf(x) + x * norm_pdf(x)))
                    .collect();
                accumulate(
                    &mut grads[node.inputs[0]],
                    Value::from_vec(x.shape().to_vec(), data),
                );
            }
        }
        Op::Sum => {
            if input_rg(0) {
                let x = &nodes[node.inputs[0]].value;
                accumulate(
                    &mut grads[node.inputs[0]],
                    Value::full(x.shape().to_vec(), grad.item()),
                );
            }
        }
        Op::AddBias => {
            let bias = &nodes[node.inputs[1]].value;
            if input_rg(0) {
                accumulate(&mut grads[node.inputs[0]], grad.clone());
            }
            if input_rg(1) {
                let cols = bias.len();
                let mut dbias = vec![0.0; cols];
                for (i, g) in grad.data().iter().enumerate() {
                    dbias[i % cols] += g;
                }
                accumulate(
                    &mut grads[node.inputs[1]],
                    Value::from_vec(bias.shape().to_vec(), dbias),
                );
            }
        }
        Op::ConcatRows { row_counts } => {
            let cols = node.value.cols();
            let mut offset = 0;
            for (slot, &rows) in row_counts.iter().enumerate() {
                if input_rg(slot) {
                    let data = grad.data()[offset * cols..(offset + rows) * cols].to_vec();
                    accumulate(
                        &mut grads[node.inputs[slot]],
                        Value::matrix(rows, cols, data),
                    );
                }
                offset += rows;
            }
        }
        Op::ConcatCols { col_counts } => {
            let rows = node.value.rows();
            let total_cols = node.value.cols();
            let mut offset = 0;
            for (slot, &cols) in col_counts.iter().enumerate() {
                if input_rg(slot) {
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        data.extend_from_slice(
                            &grad.data()[r * total_cols + offset..r * total_cols + offset + cols],
                        );
                    }
                    accumulate(
                        &mut grads[node.inputs[slot]],
                        Value::matrix(rows, cols, data),
                    );
                }
                offset += cols;
            }
        }
        Op::SliceRows { range } => {
            if input_rg(0) {
                let x = &nodes[node.inputs[0]].value;
                let cols = x.cols();
                let mut dx = Value::zeros(x.shape().to_vec());
                dx.data_mut()[range.start * cols..range.end * cols]
                    .copy_from_slice(grad.data());
                accumulate(&mut grads[node.inputs[0]], dx);
            }
        }
        Op::SliceCols { range } => {
            if input_rg(0) {
                let x = &nodes[node.inputs[0]].value;
                let cols = x.cols();
                let width = range.end - range.start;
                let mut dx = Value::zeros(x.shape().to_vec());
                for r in 0..x.rows() {
                    dx.data_mut()[r * cols + range.start..r * cols + range.end]
                        .copy_from_slice(&grad.data()[r * width..(r + 1) * width]);
                }
                accumulate(&mut grads[node.inputs[0]], dx);
            }
        }
        Op::CrossEntropy { labels } => {
            if input_rg(0) {
                let logits = &nodes[node.inputs[0]].value;
                let rows = logits.rows();
                let cols = logits.cols();
                let scale = grad.item() / rows as f64;
                let mut dx = softmax_fwd(logits, logits.shape().len() - 1);
                for (r, &label) in labels.iter().enumerate() {
                    dx.data_mut()[r * cols + label] -= 1.0;
                }
                dx.scale_mut(scale);
                accumulate(&mut grads[node.inputs[0]], dx);
            }
        }
    }
}

// --- dense kernels ---------------------------------------------------------

fn matmul_fwd(a: &Value, b: &Value) -> Value {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let a_ip = a.data()[i * k + p];
            let b_row = &b.data()[p * n..(p + 1) * n];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
    Value::matrix(m, n, out)
}

/// Gradient w.r.t. the left operand: `G · Bᵀ`.
fn matmul_grad_lhs(grad: &Value, b: &Value) -> Value {
    let (m, n) = (grad.shape()[0], grad.shape()[1]);
    let k = b.shape()[0];
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &grad.data()[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b.data()[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (g, bv) in g_row.iter().zip(b_row) {
                s += g * bv;
            }
            out[i * k + p] = s;
        }
    }
    Value::matrix(m, k, out)
}

/// Gradient w.r.t. the right operand: `Aᵀ · G`.
fn matmul_grad_rhs(a: &Value, grad: &Value) -> Value {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = grad.shape()[1];
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &grad.data()[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a.data()[i * k + p];
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &g) in out_row.iter_mut().zip(g_row) {
                *o += a_ip * g;
            }
        }
    }
    Value::matrix(k, n, out)
}

fn transpose_fwd(a: &Value) -> Value {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Value::matrix(n, m, out)
}

/// Iterates all 1-D slices along `axis` of an n-d value.
fn for_each_axis_slice(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            f(o * len * inner + i, inner);
        }
    }
}

fn softmax_fwd(x: &Value, axis: usize) -> Value {
    let mut out = x.clone();
    let len = x.shape()[axis];
    for_each_axis_slice(x.shape(), axis, |base, stride| {
        let mut max = f64::NEG_INFINITY;
        for k in 0..len {
            max = max.max(out.data()[base + k * stride]);
        }
        let mut sum = 0.0;
        for k in 0..len {
            let e = (out.data()[base + k * stride] - max).exp();
            out.data_mut()[base + k * stride] = e;
            sum += e;
        }
        for k in 0..len {
            out.data_mut()[base + k * stride] /= sum;
        }
    });
    out
}

fn softmax_backward(y: &Value, grad: &Value, axis: usize) -> Value {
    let mut out = Value::zeros(y.shape().to_vec());
    let len = y.shape()[axis];
    for_each_axis_slice(y.shape(), axis, |base, stride| {
        let mut dot = 0.0;
        for k in 0..len {
            dot += y.data()[base + k * stride] * grad.data()[base + k * stride];
        }
        for k in 0..len {
            let idx = base + k * stride;
            out.data_mut()[idx] = y.data()[idx] * (grad.data()[idx] - dot);
        }
    });
    out
}

fn layer_norm_fwd(x: &Value, gain: &Value, bias: &Value, eps: f64) -> Value {
    let rows = x.rows();
    let cols = x.cols();
    let mut out = x.clone();
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        for c in 0..cols {
            let normed = (row[c] - mean) * inv_std;
            out.data_mut()[r * cols + c] = gain.data()[c] * normed + bias.data()[c];
        }
    }
    out
}

fn layer_norm_backward(x: &Value, gain: &Value, grad: &Value, eps: f64) -> (Value, Value, Value) {
    let rows = x.rows();
    let cols = x.cols();
    let mut dx = Value::zeros(x.shape().to_vec());
    let mut dgain = Value::zeros(gain.shape().to_vec());
    let mut dbias = Value::zeros(gain.shape().to_vec());
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let g_row = &grad.data()[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv_std = 1.0 / (var + eps).sqrt();

        let mut gy_mean = 0.0;
        let mut gy_xhat_mean = 0.0;
        for c in 0..cols {
            let xhat = (row[c] - mean) * inv_std;
            let gy = g_row[c] * gain.data()[c];
            gy_mean += gy;
            gy_xhat_mean += gy * xhat;
            dgain.data_mut()[c] += g_row[c] * xhat;
            dbias.data_mut()[c] += g_row[c];
        }
        gy_mean /= cols as f64;
        gy_xhat_mean /= cols as f64;

        for c in 0..cols {
            let xhat = (row[c] - mean) * inv_std;
            let gy = g_row[c] * gain.data()[c];
            dx.data_mut()[r * cols + c] = inv_std * (gy - gy_mean - xhat * gy_xhat_mean);
        }
    }
    (dx, dgain, dbias)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Standard normal CDF via the error function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
