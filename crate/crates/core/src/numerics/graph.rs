//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records one forward evaluation. Leaves are constants or
//! parameters pulled from a [`ParamSet`]; only parameters flagged trainable
//! receive gradients, and nodes that cannot reach a trainable leaf are skipped
//! during the backward sweep.
//!
//! The op set is closed:
//!
//! | op | forward |
//! |---|---|
//! | `matmul` | `a · b` |
//! | `transpose` | `aᵀ` |
//! | `add` | `a + b` (same shape, or `b` a broadcast row) |
//! | `scale` | `c · a` |
//! | `tanh`, `relu` | elementwise |
//! | `log_softmax` | over the last dimension |
//! | `logsumexp` | over the last dimension, giving a column |
//! | `gather_rows` | embedding row lookup |
//! | `concat_rows` | vertical concatenation |
//! | `sum` | all entries to a scalar |
//! | `fused_scalar` | scalar whose local gradient the caller supplies |
//!
//! `fused_scalar` carries composite losses such as the transducer
//! forward-backward, whose gradient is cheaper to produce in closed form than
//! by recording every log-sum-exp on the tape.

use indexmap::IndexMap;

use super::params::{Gradients, ParamSet};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    Sum(Var),
    Fused {
        input: Var,
        grad: Tensor,
        name: &'static str,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::LogSoftmax(_) => "log_softmax",
            Op::LogSumExp(_) => "logsumexp",
            Op::Gather(..) => "gather_rows",
            Op::Concat(_) => "concat_rows",
            Op::Sum(_) => "sum",
            Op::Fused { name, .. } => name,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: IndexMap<String, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf bound to `params[name]`. Repeated lookups of the same name return
    /// the same node.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let v = self.push(p.value.clone(), Op::Leaf, p.trainable());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = tensor::matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = tensor::transpose(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = tensor::add(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = tensor::scale(self.value(a), c);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = tensor::tanh(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = tensor::relu(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = tensor::log_softmax(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::LogSoftmax(a), ng)
    }

    pub fn logsumexp(&mut self, a: Var) -> Var {
        let value = tensor::logsumexp_rows(self.value(a));
        let ng = self.needs(a);
        self.push(value, Op::LogSumExp(a), ng)
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let value = tensor::gather_rows(self.value(a), indices);
        let ng = self.needs(a);
        self.push(value, Op::Gather(a, indices.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = tensor::concat_rows(&tensors);
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::Concat(parts.to_vec()), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Scalar node with caller-computed `value` and `d value / d input`.
    pub fn fused_scalar(&mut self, input: Var, value: f64, grad: Tensor, name: &'static str) -> Var {
        assert_eq!(
            grad.shape(),
            self.value(input).shape(),
            "fused op `{name}` gradient shape"
        );
        let ng = self.needs(input);
        self.push(Tensor::scalar(value), Op::Fused { input, grad, name }, ng)
    }

    /// First node (in evaluation order) holding a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().find(|n| !n.value.is_finite()) {
            Some(n) => Err(Error::NonFinite { op: n.op.name() }),
            None => Ok(()),
        }
    }

    /// Reverse sweep from scalar `out`. Returns gradients for every trainable
    /// parameter bound into this graph (zero when `out` does not depend on it).
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(out).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarOutput { rows, cols });
        }
        self.check_finite()?;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !g.is_finite() {
                return Err(Error::NonFinite { op: node.op.name() });
            }
            let mut send = |v: Var, contrib: Tensor| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {
                    // Leaves keep their gradient for collection below.
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        send(*a, tensor::matmul(&g, &tensor::transpose(bv)));
                    }
                    if self.needs(*b) {
                        send(*b, tensor::matmul(&tensor::transpose(av), &g));
                    }
                }
                Op::Transpose(a) => send(*a, tensor::transpose(&g)),
                Op::Add(a, b) => {
                    let bshape = self.value(*b).shape();
                    if self.needs(*b) {
                        if bshape == g.shape() {
                            send(*b, g.clone());
                        } else {
                            let mut col = Tensor::zeros(1, g.cols());
                            for r in 0..g.rows() {
                                for (c, v) in g.row_slice(r).iter().enumerate() {
                                    col.data_mut()[c] += v;
                                }
                            }
                            send(*b, col);
                        }
                    }
                    send(*a, g);
                }
                Op::Scale(a, c) => send(*a, tensor::scale(&g, *c)),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * (1.0 - yv * yv))
                        .collect();
                    send(*a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    send(*a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::LogSoftmax(a) => {
                    // dx = g - softmax * rowsum(g)
                    let y = &node.value;
                    let mut dx = Tensor::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let gs: f64 = g.row_slice(r).iter().sum();
                        for c in 0..g.cols() {
                            dx.set(r, c, g.get(r, c) - y.get(r, c).exp() * gs);
                        }
                    }
                    send(*a, dx);
                }
                Op::LogSumExp(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut dx = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let (gr, yr) = (g.get(r, 0), y.get(r, 0));
                        for c in 0..x.cols() {
                            let p = if yr == f64::NEG_INFINITY {
                                0.0
                            } else {
                                (x.get(r, c) - yr).exp()
                            };
                            dx.set(r, c, gr * p);
                        }
                    }
                    send(*a, dx);
                }
                Op::Gather(a, indices) => {
                    let src = self.value(*a);
                    let mut dx = Tensor::zeros(src.rows(), src.cols());
                    for (out_row, &i) in indices.iter().enumerate() {
                        for c in 0..src.cols() {
                            let v = dx.get(i, c) + g.get(out_row, c);
                            dx.set(i, c, v);
                        }
                    }
                    send(*a, dx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        offset += rows;
                        if self.needs(p) {
                            send(p, tensor::gather_rows(&g, &idx));
                        }
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    send(*a, Tensor::from_vec(r, c, vec![g.item(); r * c]));
                }
                Op::Fused { input, grad, .. } => send(*input, tensor::scale(grad, g.item())),
            }
        }

        let mut out_grads = Gradients::default();
        for (name, &v) in &self.params {
            if !self.nodes[v.0].needs_grad {
                continue;
            }
            let (r, c) = self.value(v).shape();
            let g = grads[v.0].take().unwrap_or_else(|| Tensor::zeros(r, c));
            out_grads.by_name.insert(name.clone(), g);
        }
        Ok(out_grads)
    }
}
