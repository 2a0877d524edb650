//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation as a node holding its output value and
//! references to its parents. Parents always precede children, so a single
//! reverse sweep from the loss visits each node once and yields gradients for
//! every leaf.
//!
//! ```
//! use mgct::numkit::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let w = tape.leaf(Tensor::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap());
//! let loss = tape.sum(tape.mul(w, w).unwrap());
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w), tape.value(w).scale(2.0));
//! ```

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::numkit::dropout::{self, DropoutKey};
use crate::numkit::{Activation, Axis, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate gradient defects for mutation-testing the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the backward rule of `tanh`.
    TanhGradSign,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddColBias(Var, Var),
    Affine(Var, f64),
    Act(Var, Activation),
    Softmax(Var),
    Concat(Var, Var, Axis),
    Slice(Var, usize, Axis),
    Sum(Var),
    MeanCols(Var),
    LogClamped(Var, f64),
    Dropout(Var, Vec<bool>, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation recorder. Single-writer; use one tape per thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Option<Fault>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves the gradient for `v` out, zero-filled when unreached.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Gradient for `v`, zero-filled when unreached.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        Tape { nodes: RefCell::default(), fault }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            op => parents(op).iter().any(|p| nodes[p.0].requires_grad),
        };
        nodes.push(Node { value, op, requires_grad });
        Var(nodes.len() - 1)
    }

    /// Trainable input; receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Fixed input; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.data()[0]
    }

    fn unary(&self, a: Var, f: impl FnOnce(&Tensor) -> Result<Tensor>, op: Op) -> Result<Var> {
        let value = f(&self.nodes.borrow()[a.0].value)?;
        Ok(self.push(value, op))
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
        op: Op,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)?
        };
        Ok(self.push(value, op))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x.matmul(y), Op::MatMul(a, b))
    }

    pub fn transpose(&self, a: Var) -> Var {
        self.unary(a, |x| Ok(x.transpose()), Op::Transpose(a)).expect("transpose is total")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x.add(y), Op::Add(a, b))
    }

    /// Hadamard product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x.mul(y), Op::Mul(a, b))
    }

    /// Adds a column vector to every column of `a`.
    pub fn add_col_bias(&self, a: Var, bias: Var) -> Result<Var> {
        self.binary(a, bias, |x, b| x.add_col_broadcast(b), Op::AddColBias(a, bias))
    }

    /// `k · a + shift`, with constant `k` and `shift`.
    pub fn affine(&self, a: Var, k: f64, shift: f64) -> Var {
        self.unary(a, |x| Ok(x.map(|v| k * v + shift)), Op::Affine(a, k))
            .expect("affine is total")
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    pub fn activate(&self, a: Var, kind: Activation) -> Var {
        self.unary(a, |x| Ok(x.activate(kind)), Op::Act(a, kind)).expect("activation is total")
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn elu(&self, a: Var) -> Var {
        self.activate(a, Activation::Elu)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.activate(a, Activation::Relu)
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        self.unary(a, |x| Ok(x.softmax_rows()), Op::Softmax(a)).expect("softmax is total")
    }

    pub fn concat(&self, a: Var, b: Var, axis: Axis) -> Result<Var> {
        self.binary(a, b, |x, y| x.concat(y, axis), Op::Concat(a, b, axis))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, a: Var, start: usize, end: usize, axis: Axis) -> Result<Var> {
        self.unary(a, |x| x.slice(start, end, axis), Op::Slice(a, start, axis))
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&self, a: Var) -> Var {
        self.unary(a, |x| Ok(Tensor::scalar(x.sum())), Op::Sum(a)).expect("sum is total")
    }

    /// Column mean: `d × n → d × 1`.
    pub fn mean_cols(&self, a: Var) -> Result<Var> {
        self.unary(
            a,
            |x| {
                if x.cols() == 0 {
                    return Err(Error::Contract("mean over zero columns".into()));
                }
                Ok(x.mean_cols())
            },
            Op::MeanCols(a),
        )
    }

    /// `ln(max(a, eps))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&self, a: Var, eps: f64) -> Var {
        self.unary(a, |x| Ok(x.map(|v| v.max(eps).ln())), Op::LogClamped(a, eps))
            .expect("log is total on clamped input")
    }

    /// Alpha dropout; returns `a` unchanged in eval mode or when `p == 0`.
    pub fn alpha_dropout(&self, a: Var, p: f64, key: DropoutKey, training: bool) -> Result<Var> {
        dropout::check_rate(p)?;
        if !training || p == 0.0 {
            return Ok(a);
        }
        let len = self.nodes.borrow()[a.0].value.len();
        let keep = dropout::keep_mask(len, p, key);
        let value = dropout::apply_mask(&self.nodes.borrow()[a.0].value, &keep, p);
        Ok(self.push(value, Op::Dropout(a, keep, p)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shapes: Vec<_> = nodes.iter().map(|n| n.value.shape()).collect();
        if shapes[loss.0] != (1, 1) {
            let (r, c) = shapes[loss.0];
            return Err(Error::Contract(format!("backward needs a 1x1 loss, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(upstream) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                for (parent, g) in self.local_grads(&nodes, node, &upstream)? {
                    if !nodes[parent.0].requires_grad {
                        continue;
                    }
                    match &mut grads[parent.0] {
                        Some(acc) => acc.add_assign(&g)?,
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            grads[id] = Some(upstream);
        }
        grads.resize(shapes.len(), None);
        Ok(Gradients { grads, shapes })
    }

    fn local_grads(&self, nodes: &[Node], node: &Node, up: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &nodes[v.0].value;
        let out = &node.value;
        Ok(match &node.op {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::MatMul(a, b) => {
                let mut g = Vec::with_capacity(2);
                if nodes[a.0].requires_grad {
                    g.push((*a, up.matmul_t(val(*b))?));
                }
                if nodes[b.0].requires_grad {
                    g.push((*b, val(*a).t_matmul(up)?));
                }
                g
            }
            Op::Transpose(a) => vec![(*a, up.transpose())],
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Mul(a, b) => vec![(*a, up.mul(val(*b))?), (*b, up.mul(val(*a))?)],
            Op::AddColBias(a, bias) => {
                let gb = Tensor::from_fn(up.rows(), 1, |r, _| up.row(r).iter().sum());
                vec![(*a, up.clone()), (*bias, gb)]
            }
            Op::Affine(a, k) => vec![(*a, up.scale(*k))],
            Op::Act(a, kind) => {
                let x = val(*a);
                let mut d = Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    kind.derivative(x.get(r, c), out.get(r, c))
                });
                if *kind == Activation::Tanh && self.fault == Some(Fault::TanhGradSign) {
                    d = d.scale(-1.0);
                }
                vec![(*a, up.mul(&d)?)]
            }
            Op::Softmax(a) => {
                let mut g = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let dy = up.row(r);
                    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for c in 0..out.cols() {
                        g.set(r, c, y[c] * (dy[c] - dot));
                    }
                }
                vec![(*a, g)]
            }
            Op::Concat(a, b, axis) => {
                let at = match axis {
                    Axis::Rows => val(*a).rows(),
                    Axis::Cols => val(*a).cols(),
                };
                let (ga, gb) = up.split(at, *axis)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Slice(a, start, axis) => {
                let x = val(*a);
                let mut g = Tensor::zeros(x.rows(), x.cols());
                for r in 0..up.rows() {
                    for c in 0..up.cols() {
                        match axis {
                            Axis::Rows => g.set(start + r, c, up.get(r, c)),
                            Axis::Cols => g.set(r, start + c, up.get(r, c)),
                        }
                    }
                }
                vec![(*a, g)]
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Tensor::filled(r, c, up.data()[0]))]
            }
            Op::MeanCols(a) => {
                let x = val(*a);
                let n = x.cols() as f64;
                vec![(*a, Tensor::from_fn(x.rows(), x.cols(), |r, _| up.get(r, 0) / n))]
            }
            Op::LogClamped(a, eps) => {
                let x = val(*a);
                let d = x.map(|v| if v > *eps { 1.0 / v } else { 0.0 });
                vec![(*a, up.mul(&d)?)]
            }
            Op::Dropout(a, keep, p) => {
                let (scale, _) = dropout::affine_correction(*p);
                let data = up
                    .data()
                    .iter()
                    .zip(keep)
                    .map(|(&g, &k)| if k { g * scale } else { 0.0 })
                    .collect();
                vec![(*a, Tensor::new(up.rows(), up.cols(), data)?)]
            }
        })
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Constant => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddColBias(a, b) | Op::Concat(a, b, _) => {
            vec![*a, *b]
        }
        Op::Transpose(a)
        | Op::Affine(a, _)
        | Op::Act(a, _)
        | Op::Softmax(a)
        | Op::Slice(a, _, _)
        | Op::Sum(a)
        | Op::MeanCols(a)
        | Op::LogClamped(a, _)
        | Op::Dropout(a, _, _) => vec![*a],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let tape = Tape::new();
        let w = tape.leaf(Tensor::from_fn(3, 2, |r, c| r as f64 * 0.5 - c as f64));
        let g = tape.backward(tape.sum(w)).unwrap();
        assert_eq!(g.wrt(w), Tensor::ones(3, 2));
    }

    #[test]
    fn squared_norm_gives_twice_w() {
        let tape = Tape::new();
        let w0 = Tensor::from_fn(2, 3, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let w = tape.leaf(w0.clone());
        let loss = tape.sum(tape.mul(w, w).unwrap());
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w), w0.scale(2.0));
        assert_eq!(g.wrt(loss), Tensor::scalar(1.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(2, 2));
        let w = tape.leaf(Tensor::identity(2));
        let loss = tape.sum(tape.matmul(w, x).unwrap());
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(x), Tensor::zeros(2, 2));
        assert_eq!(g.wrt(w), Tensor::filled(2, 2, 2.0));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let y = tape.add(w, w).unwrap();
        let loss = tape.sum(tape.mul(y, w).unwrap());
        // loss = 2w², d/dw = 4w
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data()[0], 12.0);
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(2, 2));
        let y = tape.alpha_dropout(x, 0.5, DropoutKey::new(0, 0, 0), false).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn injected_fault_flips_tanh() {
        let x0 = Tensor::scalar(0.3);
        let grad = |fault| {
            let tape = Tape::with_fault(fault);
            let x = tape.leaf(x0.clone());
            let loss = tape.sum(tape.tanh(x));
            tape.backward(loss).unwrap().wrt(x).data()[0]
        };
        assert_eq!(grad(None), -grad(Some(Fault::TanhGradSign)));
    }
}
