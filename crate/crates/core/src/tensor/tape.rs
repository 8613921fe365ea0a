use std::cell::{Cell, RefCell};
use std::fmt;

use super::{matmul_at_into, matmul_bt_into, matmul_dims, matmul_into, Tensor};
use crate::error::{Error, Result};

/// Recorded operation. Input references are node ids on the same tape.
#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Abs(usize),
    Sigmoid(usize),
    Tanh(usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    AddRow(usize, usize),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    L1Loss(usize, usize),
    Reshape(usize),
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Conv1d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        padding: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of executed operations.
///
/// Execution order is topological order; [`Tape::backward`] walks it in
/// reverse exactly once. Call [`Tape::reset`] to reuse the allocation for the
/// next step. A tape is not `Sync`: it belongs to one thread.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    finalized: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients of a scalar loss with respect to the tape's tracked leaves.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient for a leaf, zero-filled when the loss does not reach it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.shape()),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            finalized: Cell::new(false),
        }
    }

    /// Clears all recorded nodes so the tape can run another step.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
        self.finalized.set(false);
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf without gradient tracking.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a leaf, tracking its gradient iff `requires_grad`.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Runs reverse-mode differentiation from a scalar `loss`, seeding 1.0.
    ///
    /// Fails on a non-scalar loss, on a loss from another tape, or when the
    /// tape has already been differentiated.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Tape("loss belongs to a different tape".into()));
        }
        if self.finalized.get() {
            return Err(Error::Tape(
                "backward already ran on this tape; reset it first".into(),
            ));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Tape(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        self.finalized.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        if root.requires_grad {
            grads[loss.id] = Some(vec![1.0]);
        }

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            propagate(&nodes, node, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                let node = &nodes[id];
                match (g, &node.op) {
                    (Some(g), Op::Leaf) => Some(Tensor {
                        shape: node.value.shape.clone(),
                        data: g,
                    }),
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, contribution: Vec<f64>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(&contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn map_grad(g: &[f64], f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    g.iter().enumerate().map(|(i, &gi)| f(i, gi)).collect()
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |id: usize| nodes[id].value.data();
    let rg = |id: usize| nodes[id].requires_grad;
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, a, g.to_vec());
            accumulate(grads, nodes, b, g.to_vec());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, a, g.to_vec());
            accumulate(grads, nodes, b, map_grad(g, |_, gi| -gi));
        }
        Op::Mul(a, b) => {
            if rg(a) {
                let bv = val(b);
                accumulate(grads, nodes, a, map_grad(g, |i, gi| gi * bv[i]));
            }
            if rg(b) {
                let av = val(a);
                accumulate(grads, nodes, b, map_grad(g, |i, gi| gi * av[i]));
            }
        }
        Op::Neg(a) => accumulate(grads, nodes, a, map_grad(g, |_, gi| -gi)),
        Op::Abs(a) => {
            let av = val(a);
            accumulate(grads, nodes, a, map_grad(g, |i, gi| gi * sign(av[i])));
        }
        Op::Sigmoid(a) => {
            let y = node.value.data();
            accumulate(grads, nodes, a, map_grad(g, |i, gi| gi * y[i] * (1.0 - y[i])));
        }
        Op::Tanh(a) => {
            let y = node.value.data();
            accumulate(grads, nodes, a, map_grad(g, |i, gi| gi * (1.0 - y[i] * y[i])));
        }
        Op::Scale(a, c) => accumulate(grads, nodes, a, map_grad(g, |_, gi| gi * c)),
        Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a].value.shape(), nodes[b].value.shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if rg(a) {
                let mut ga = vec![0.0; m * k];
                matmul_bt_into(g, val(b), &mut ga, m, n, k);
                accumulate(grads, nodes, a, ga);
            }
            if rg(b) {
                let mut gb = vec![0.0; k * n];
                matmul_at_into(val(a), g, &mut gb, m, k, n);
                accumulate(grads, nodes, b, gb);
            }
        }
        Op::AddRow(a, bias) => {
            accumulate(grads, nodes, a, g.to_vec());
            if rg(bias) {
                let n = nodes[bias].value.numel();
                let mut gb = vec![0.0; n];
                for row in g.chunks_exact(n) {
                    for (o, &v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                accumulate(grads, nodes, bias, gb);
            }
        }
        Op::Transpose(a) => {
            let s = node.value.shape();
            let (r, c) = (s[0], s[1]);
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    ga[j * r + i] = g[i * c + j];
                }
            }
            accumulate(grads, nodes, a, ga);
        }
        Op::Sum(a) => {
            let n = nodes[a].value.numel();
            accumulate(grads, nodes, a, vec![g[0]; n]);
        }
        Op::Mean(a) => {
            let n = nodes[a].value.numel();
            accumulate(grads, nodes, a, vec![g[0] / n as f64; n]);
        }
        Op::L1Loss(pred, target) => {
            let (p, t) = (val(pred), val(target));
            let scale = g[0] / p.len() as f64;
            let gp = p.iter().zip(t).map(|(&pi, &ti)| scale * sign(pi - ti)).collect();
            accumulate(grads, nodes, pred, gp);
        }
        Op::Reshape(a) => accumulate(grads, nodes, a, g.to_vec()),
        Op::Concat { ref inputs, axis } => {
            let (outer, total, inner) = axis_extents(node.value.shape(), axis);
            let mut offset = 0;
            for &input in inputs {
                let len = nodes[input].value.shape()[axis];
                if rg(input) {
                    let mut gi = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        gi.extend_from_slice(&g[start..start + len * inner]);
                    }
                    accumulate(grads, nodes, input, gi);
                }
                offset += len;
            }
        }
        Op::Slice { input, axis, start } => {
            let (outer, total, inner) = axis_extents(nodes[input].value.shape(), axis);
            let len = node.value.shape()[axis];
            let mut gi = vec![0.0; outer * total * inner];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                let src = o * len * inner;
                gi[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            accumulate(grads, nodes, input, gi);
        }
        Op::Conv1d {
            input,
            weight,
            bias,
            padding,
        } => {
            let xs = nodes[input].value.shape();
            let ws = nodes[weight].value.shape();
            let (c_in, t_len) = (xs[0], xs[1]);
            let (c_out, ksize) = (ws[0], ws[2]);
            let (x, w) = (val(input), val(weight));
            let mut gx = vec![0.0; c_in * t_len];
            let mut gw = vec![0.0; c_out * c_in * ksize];
            for o in 0..c_out {
                for t in 0..t_len {
                    let go = g[o * t_len + t];
                    if go == 0.0 {
                        continue;
                    }
                    for j in 0..ksize {
                        let Some(src) = (t + j).checked_sub(padding).filter(|&s| s < t_len) else {
                            continue;
                        };
                        for c in 0..c_in {
                            let widx = (o * c_in + c) * ksize + j;
                            gx[c * t_len + src] += go * w[widx];
                            gw[widx] += go * x[c * t_len + src];
                        }
                    }
                }
            }
            accumulate(grads, nodes, input, gx);
            accumulate(grads, nodes, weight, gw);
            if let Some(b) = bias {
                let gb = g.chunks_exact(t_len).map(|row| row.iter().sum()).collect();
                accumulate(grads, nodes, b, gb);
            }
        }
    }
}

/// Subgradient of `|x|`, zero at the kink.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the current value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Tape("operands recorded on different tapes".into()))
        }
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'t> {
        let requires_grad = {
            let nodes = self.tape.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        self.tape.push(value, op, requires_grad)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            if a.shape() != b.shape() {
                return Err(Error::shape(name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor {
                shape: a.shape.clone(),
                data,
            }
        };
        Ok(self.record(value, op, &[self.id, other.id]))
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            Tensor {
                shape: a.shape.clone(),
                data: a.data().iter().map(|&x| f(x)).collect(),
            }
        };
        self.record(value, op, &[self.id])
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    pub fn abs(&self) -> Var<'t> {
        self.unary(f64::abs, Op::Abs(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(stable_sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(f64::tanh, Op::Tanh(self.id))
    }

    /// Multiplies every element by the constant `c`.
    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(|x| x * c, Op::Scale(self.id, c))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let (m, k, n) = matmul_dims(a.shape(), b.shape())?;
            let mut out = vec![0.0; m * n];
            matmul_into(a.data(), b.data(), &mut out, m, k, n);
            Tensor {
                shape: vec![m, n],
                data: out,
            }
        };
        Ok(self.record(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    ///
    /// This is the one explicit broadcast the engine offers; it exists for
    /// affine biases.
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[bias.id].value);
            if a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0] {
                return Err(Error::shape("add_row", a.shape(), b.shape()));
            }
            let n = b.numel();
            let mut data = a.data().to_vec();
            for row in data.chunks_exact_mut(n) {
                for (o, &bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            Tensor {
                shape: a.shape.clone(),
                data,
            }
        };
        Ok(self.record(value, Op::AddRow(self.id, bias.id), &[self.id, bias.id]))
    }

    /// Transpose of a matrix.
    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            if a.rank() != 2 {
                return Err(Error::InvalidShape(format!(
                    "transpose needs a matrix, got {:?}",
                    a.shape()
                )));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            let mut data = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    data[j * r + i] = a.data()[i * c + j];
                }
            }
            Tensor {
                shape: vec![c, r],
                data,
            }
        };
        Ok(self.record(value, Op::Transpose(self.id), &[self.id]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Var<'t> {
        let s = self.tape.nodes.borrow()[self.id].value.data().iter().sum();
        self.record(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self) -> Var<'t> {
        let m = {
            let nodes = self.tape.nodes.borrow();
            let d = nodes[self.id].value.data();
            d.iter().sum::<f64>() / d.len() as f64
        };
        self.record(Tensor::scalar(m), Op::Mean(self.id), &[self.id])
    }

    /// Mean absolute difference to `target`. The target must not track
    /// gradients.
    pub fn l1_loss(&self, target: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&target)?;
        if target.requires_grad() {
            return Err(Error::InvalidArgument(
                "l1_loss target must not require gradients".into(),
            ));
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (p, t) = (&nodes[self.id].value, &nodes[target.id].value);
            if p.shape() != t.shape() {
                return Err(Error::shape("l1_loss", p.shape(), t.shape()));
            }
            if p.numel() == 0 {
                return Err(Error::InvalidShape("l1_loss on empty tensors".into()));
            }
            let total: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum();
            Tensor::scalar(total / p.numel() as f64)
        };
        Ok(self.record(value, Op::L1Loss(self.id, target.id), &[self.id, target.id]))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let shape = shape.into();
        let value = self.tape.nodes.borrow()[self.id].value.reshaped(shape)?;
        Ok(self.record(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            if axis >= a.rank() {
                return Err(Error::OutOfRange(format!(
                    "slice axis {axis} for shape {:?}",
                    a.shape()
                )));
            }
            if start >= end || end > a.shape()[axis] {
                return Err(Error::OutOfRange(format!(
                    "slice {start}..{end} along axis {axis} of shape {:?}",
                    a.shape()
                )));
            }
            let (outer, total, inner) = axis_extents(a.shape(), axis);
            let len = end - start;
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let s = (o * total + start) * inner;
                data.extend_from_slice(&a.data()[s..s + len * inner]);
            }
            let mut shape = a.shape.clone();
            shape[axis] = len;
            Tensor { shape, data }
        };
        Ok(self.record(
            value,
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
            &[self.id],
        ))
    }

    /// Joins tensors along an existing axis. All other extents must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let tape = first.tape;
        let value = {
            let nodes = tape.nodes.borrow();
            let base = nodes[first.id].value.shape();
            if axis >= base.len() {
                return Err(Error::OutOfRange(format!(
                    "concat axis {axis} for shape {base:?}"
                )));
            }
            let mut total = 0;
            for p in parts {
                let s = nodes[p.id].value.shape();
                let compatible = s.len() == base.len()
                    && s.iter()
                        .zip(base)
                        .enumerate()
                        .all(|(d, (x, y))| d == axis || x == y);
                if !compatible {
                    return Err(Error::shape("concat", base, s));
                }
                total += s[axis];
            }
            let (outer, _, inner) = axis_extents(base, axis);
            let mut data = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for p in parts {
                    let v = &nodes[p.id].value;
                    let chunk = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            let mut shape = base.to_vec();
            shape[axis] = total;
            Tensor { shape, data }
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.record(
            value,
            Op::Concat {
                inputs: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// Joins equally-shaped tensors along a new axis inserted at `axis`.
    pub fn stack(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of zero tensors".into()))?;
        let base = first.shape();
        if axis > base.len() {
            return Err(Error::OutOfRange(format!(
                "stack axis {axis} for shape {base:?}"
            )));
        }
        let mut expanded = base.clone();
        expanded.insert(axis, 1);
        let lifted = parts
            .iter()
            .map(|p| {
                let s = p.shape();
                if s != base {
                    return Err(Error::shape("stack", &base, &s));
                }
                p.reshape(expanded.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Var::concat(&lifted, axis)
    }

    /// Same-padded 1-D cross-correlation.
    ///
    /// `self` is `C_in×T`, `weight` is `C_out×C_in×K` with odd `K`, `bias`
    /// is length `C_out`. Output is `C_out×T`.
    pub fn conv1d(&self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        self.same_tape(&weight)?;
        if let Some(b) = &bias {
            self.same_tape(b)?;
        }
        let (value, padding) = {
            let nodes = self.tape.nodes.borrow();
            let (x, w) = (&nodes[self.id].value, &nodes[weight.id].value);
            if x.rank() != 2 || w.rank() != 3 || w.shape()[1] != x.shape()[0] {
                return Err(Error::shape("conv1d", x.shape(), w.shape()));
            }
            let (c_in, t_len) = (x.shape()[0], x.shape()[1]);
            let (c_out, ksize) = (w.shape()[0], w.shape()[2]);
            if ksize % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv1d kernel size must be odd, got {ksize}"
                )));
            }
            if ksize > 2 * t_len + 1 {
                return Err(Error::InvalidArgument(format!(
                    "conv1d kernel size {ksize} wider than 2T+1 for T={t_len}"
                )));
            }
            let padding = (ksize - 1) / 2;
            let mut out = vec![0.0; c_out * t_len];
            if let Some(b) = &bias {
                let bv = &nodes[b.id].value;
                if bv.shape() != [c_out] {
                    return Err(Error::shape("conv1d bias", bv.shape(), &[c_out]));
                }
                for (row, &b) in out.chunks_exact_mut(t_len).zip(bv.data()) {
                    row.fill(b);
                }
            }
            let (xd, wd) = (x.data(), w.data());
            for o in 0..c_out {
                for c in 0..c_in {
                    let xrow = &xd[c * t_len..(c + 1) * t_len];
                    for j in 0..ksize {
                        let wv = wd[(o * c_in + c) * ksize + j];
                        for t in 0..t_len {
                            if let Some(src) = (t + j).checked_sub(padding).filter(|&s| s < t_len) {
                                out[o * t_len + t] += wv * xrow[src];
                            }
                        }
                    }
                }
            }
            (
                Tensor {
                    shape: vec![c_out, t_len],
                    data: out,
                },
                padding,
            )
        };
        let mut inputs = vec![self.id, weight.id];
        if let Some(b) = bias {
            inputs.push(b.id);
        }
        Ok(self.record(
            value,
            Op::Conv1d {
                input: self.id,
                weight: weight.id,
                bias: bias.map(|b| b.id),
                padding,
            },
            &inputs,
        ))
    }
}
