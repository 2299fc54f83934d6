//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value and the ids of
//! its inputs, so node order is always a topological order. [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints.
//!
//! ```
//! use cotsfa::numeric::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

use std::rc::Rc;

use super::tensor::{gemm, logsumexp_nonempty, strides, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Tanh(Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Gather(Var, Rc<Vec<usize>>),
    LogSumExp(Var),
    Custom(Vec<Var>, Rc<dyn CustomOp>),
}

/// A differentiable operation whose forward value is computed by the caller.
pub trait CustomOp: std::fmt::Debug {
    /// Adjoint of every input given the adjoint `grad` of `output`.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of operations for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// How a broadcast `rhs` lines up with the flat elements of `lhs`.
enum Broadcast {
    /// `rhs` repeats along leading axes: element `k` reads `k % n`.
    Cycle(usize),
    /// `rhs` repeats along trailing axes: element `k` reads `k / inner`.
    Block(usize),
    Map(Vec<usize>),
}

impl Broadcast {
    fn plan(lhs: &[usize], rhs: &[usize]) -> Option<Self> {
        let n: usize = rhs.iter().product();
        if rhs.len() == lhs.len() && n > 0 {
            let lead = rhs.iter().take_while(|d| **d == 1).count();
            if rhs[lead..] == lhs[lead..] {
                return Some(Broadcast::Cycle(n));
            }
            let tail = rhs.iter().rev().take_while(|d| **d == 1).count();
            let head = rhs.len() - tail;
            if rhs[..head] == lhs[..head] {
                return Some(Broadcast::Block(lhs[head..].iter().product()));
            }
        }
        broadcast_map(lhs, rhs).map(Broadcast::Map)
    }

    #[inline]
    fn index(&self, k: usize) -> usize {
        match self {
            Broadcast::Cycle(n) => k % n,
            Broadcast::Block(inner) => k / inner,
            Broadcast::Map(m) => m[k],
        }
    }
}

/// For `rhs` broadcast against `lhs`, the rhs flat index of every lhs element.
fn broadcast_map(lhs: &[usize], rhs: &[usize]) -> Option<Vec<usize>> {
    let n: usize = lhs.iter().product();
    if rhs.is_empty() {
        return Some(vec![0; n]);
    }
    if rhs.len() != lhs.len() || rhs.iter().zip(lhs).any(|(r, l)| *r != *l && *r != 1) {
        return None;
    }
    let rs = strides(rhs);
    let eff: Vec<usize> = rhs
        .iter()
        .zip(&rs)
        .map(|(d, s)| if *d == 1 { 0 } else { *s })
        .collect();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; lhs.len()];
    let mut cur = 0usize;
    for _ in 0..n {
        map.push(cur);
        for ax in (0..lhs.len()).rev() {
            idx[ax] += 1;
            cur += eff[ax];
            if idx[ax] < lhs[ax] {
                break;
            }
            cur -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Some(map)
}

pub(crate) fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let walk: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.len();
    let src = t.data();
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        let nd = out_shape.len();
        let mut idx = vec![0usize; nd];
        let mut cur = 0usize;
        for _ in 0..n {
            out.push(src[cur]);
            for ax in (0..nd).rev() {
                idx[ax] += 1;
                cur += walk[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                cur -= walk[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }
    Tensor::new(out_shape, out).expect("permute preserves size")
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduce_axis(t: &Tensor, axis: Option<usize>, mean: bool) -> Tensor {
    match axis {
        None => {
            let s: f64 = t.data().iter().sum();
            let n = t.len().max(1) as f64;
            Tensor::scalar(if mean { s / n } else { s })
        }
        Some(ax) => {
            let (outer, len, inner) = axis_split(t.shape(), ax);
            let mut out = vec![0.0; outer * inner];
            let d = t.data();
            for o in 0..outer {
                for k in 0..len {
                    let base = (o * len + k) * inner;
                    let dst = &mut out[o * inner..(o + 1) * inner];
                    for (x, v) in dst.iter_mut().zip(&d[base..base + inner]) {
                        *x += v;
                    }
                }
            }
            if mean && len > 0 {
                let f = 1.0 / len as f64;
                out.iter_mut().for_each(|v| *v *= f);
            }
            let mut shape = t.shape().to_vec();
            shape.remove(ax);
            Tensor::new(shape, out).expect("reduction shape")
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node. Handles issued before the call become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A differentiable input (parameter or point under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Matrix product: `[m,k]×[k,n]`, or batched `[b,m,k]×[b,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        let out = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => {
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, ta.data(), k, 1, tb.data(), n, 1, &mut c, 0.0);
                Tensor::new(vec![m, n], c)?
            }
            (3, 3) if sa[0] == sb[0] && sa[2] == sb[1] => {
                let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let mut c = vec![0.0; bt * m * n];
                for i in 0..bt {
                    gemm(
                        m,
                        k,
                        n,
                        &ta.data()[i * m * k..],
                        k,
                        1,
                        &tb.data()[i * k * n..],
                        n,
                        1,
                        &mut c[i * m * n..],
                        0.0,
                    );
                }
                Tensor::new(vec![bt, m, n], c)?
            }
            _ => return Err(dim_err("matmul", ta, tb)),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary_broadcast(&mut self, a: Var, b: Var, sign: f64, op: &'static str) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data: Vec<f64> = if ta.shape() == tb.shape() {
            ta.data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| x + sign * y)
                .collect()
        } else {
            let plan =
                Broadcast::plan(ta.shape(), tb.shape()).ok_or_else(|| dim_err(op, ta, tb))?;
            let bd = tb.data();
            match plan {
                Broadcast::Cycle(n) => ta
                    .data()
                    .chunks(n)
                    .flat_map(|c| c.iter().zip(bd).map(|(x, y)| x + sign * y))
                    .collect(),
                _ => ta
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x + sign * bd[plan.index(k)])
                    .collect(),
            }
        };
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        let kind = if sign > 0.0 {
            Op::Add(a, b)
        } else {
            Op::Sub(a, b)
        };
        Ok(self.push(out, kind, rg))
    }

    /// `a + b`, with `b` broadcast over size-1 axes of the same rank or as a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(a, b, 1.0, "add")
    }

    /// `a - b`, broadcasting like [`Tape::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(a, b, -1.0, "sub")
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("mul", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("unary keeps shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Sum over one axis (removed from the shape), or over everything into a scalar.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis(a, axis)?;
        let out = reduce_axis(self.value(a), axis, false);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sum(a, axis), rg))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis(a, axis)?;
        if self.value(a).is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let out = reduce_axis(self.value(a), axis, true);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Mean(a, axis), rg))
    }

    fn check_axis(&self, a: Var, axis: Option<usize>) -> Result<()> {
        match axis {
            Some(ax) if ax >= self.value(a).ndim() => Err(Error::Contract(format!(
                "axis {ax} out of range for shape {:?}",
                self.shape(a)
            ))),
            _ => Ok(()),
        }
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Contract(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(dim_err("concat", self.value(*first), self.value(*p)));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.ndim() || start > end || end > t.shape()[axis] {
            return Err(Error::Contract(format!(
                "slice {start}..{end} on axis {axis} of shape {:?}",
                t.shape()
            )));
        }
        let (outer, len, inner) = axis_split(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            data.extend_from_slice(&t.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = end - start;
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Slice(a, axis, start), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let nd = self.value(a).ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd
            || perm
                .iter()
                .any(|&p| p >= nd || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Contract(format!(
                "invalid permutation {perm:?} for rank {nd}"
            )));
        }
        let out = permute_tensor(self.value(a), perm);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Permute(a, perm.to_vec()), rg))
    }

    /// Select flat elements of `a` by index into a tensor of `shape`.
    pub fn gather(&mut self, a: Var, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let n: usize = shape.iter().product();
        if n != indices.len() {
            return Err(Error::Contract(format!(
                "gather of {} indices into shape {shape:?}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.len()) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {} elements",
                t.len()
            )));
        }
        let src = t.data();
        let data = indices.iter().map(|&i| src[i]).collect();
        let out = Tensor::new(shape.to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Gather(a, indices), rg))
    }

    /// Stable log-sum-exp over the last axis, which is removed from the shape.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let shape = t.shape();
        let last = *shape
            .last()
            .ok_or_else(|| Error::Domain("logsumexp of a scalar".into()))?;
        if last == 0 {
            return Err(Error::Domain("logsumexp of an empty vector".into()));
        }
        let data: Vec<f64> = t.data().chunks(last).map(logsumexp_nonempty).collect();
        let out = Tensor::new(shape[..shape.len() - 1].to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSumExp(a), rg))
    }

    /// Record `value` as the result of `op` applied to `inputs`.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Rc<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|v| self.rg(*v));
        self.push(value, Op::Custom(inputs.to_vec(), op), rg)
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                let (bt, m, k, n) = if sa.len() == 2 {
                    (1, sa[0], sa[1], sb[1])
                } else {
                    (sa[0], sa[1], sa[2], sb[2])
                };
                if self.rg(*a) {
                    let mut da = vec![0.0; bt * m * k];
                    for i in 0..bt {
                        // dA = dC · Bᵀ
                        gemm(
                            m,
                            n,
                            k,
                            &gd[i * m * n..],
                            n,
                            1,
                            &tb.data()[i * k * n..],
                            1,
                            n,
                            &mut da[i * m * k..],
                            0.0,
                        );
                    }
                    acc(*a, Tensor::new(sa.to_vec(), da).expect("shape"));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; bt * k * n];
                    for i in 0..bt {
                        // dB = Aᵀ · dC
                        gemm(
                            k,
                            m,
                            n,
                            &ta.data()[i * m * k..],
                            1,
                            k,
                            &gd[i * m * n..],
                            n,
                            1,
                            &mut db[i * k * n..],
                            0.0,
                        );
                    }
                    acc(*b, Tensor::new(sb.to_vec(), db).expect("shape"));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Add(..)) {
                    1.0
                } else {
                    -1.0
                };
                acc(*a, g.clone());
                if self.rg(*b) {
                    let tb = val(*b);
                    let db = if tb.shape() == g.shape() {
                        let d = gd.iter().map(|x| sign * x).collect();
                        Tensor::new(tb.shape().to_vec(), d).expect("shape")
                    } else {
                        let plan =
                            Broadcast::plan(g.shape(), tb.shape()).expect("checked in forward");
                        let mut d = vec![0.0; tb.len()];
                        match plan {
                            Broadcast::Cycle(n) => {
                                for c in gd.chunks(n) {
                                    for (dj, x) in d.iter_mut().zip(c) {
                                        *dj += x;
                                    }
                                }
                                if sign < 0.0 {
                                    d.iter_mut().for_each(|v| *v = -*v);
                                }
                            }
                            _ => {
                                for (k, x) in gd.iter().enumerate() {
                                    d[plan.index(k)] += sign * x;
                                }
                            }
                        }
                        Tensor::new(tb.shape().to_vec(), d).expect("shape")
                    };
                    acc(*b, db);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if self.rg(*a) {
                    let d = gd.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
                if self.rg(*b) {
                    let d = gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    acc(*b, Tensor::new(g.shape().to_vec(), d).expect("shape"));
                }
            }
            Op::Scale(a, c) => {
                let d = gd.iter().map(|x| x * c).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                let shape = val(*a).shape().to_vec();
                acc(*a, g.clone().reshape(shape).expect("shape"));
            }
            Op::Exp(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(x, y)| x * y).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Log(a) => {
                let d = gd.iter().zip(val(*a).data()).map(|(x, y)| x / y).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Abs(a) => {
                let d = gd
                    .iter()
                    .zip(val(*a).data())
                    .map(|(x, y)| {
                        if *y > 0.0 {
                            *x
                        } else if *y < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(x, y)| x * (1.0 - y * y)).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d).expect("shape"));
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let ta = val(*a);
                let is_mean = matches!(node.op, Op::Mean(..));
                let d = match axis {
                    None => {
                        let f = if is_mean { 1.0 / ta.len() as f64 } else { 1.0 };
                        vec![gd[0] * f; ta.len()]
                    }
                    Some(ax) => {
                        let (outer, len, inner) = axis_split(ta.shape(), *ax);
                        let f = if is_mean { 1.0 / len as f64 } else { 1.0 };
                        let mut d = Vec::with_capacity(ta.len());
                        for o in 0..outer {
                            for _ in 0..len {
                                d.extend(gd[o * inner..(o + 1) * inner].iter().map(|x| x * f));
                            }
                        }
                        d
                    }
                };
                acc(*a, Tensor::new(ta.shape().to_vec(), d).expect("shape"));
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let tp = val(*p);
                    let len = tp.shape()[*axis];
                    if self.rg(*p) {
                        let mut d = Vec::with_capacity(tp.len());
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        acc(*p, Tensor::new(tp.shape().to_vec(), d).expect("shape"));
                    }
                    offset += len;
                }
            }
            Op::Slice(a, axis, start) => {
                let ta = val(*a);
                let (outer, len, inner) = axis_split(ta.shape(), *axis);
                let width = g.shape()[*axis];
                let mut d = vec![0.0; ta.len()];
                for o in 0..outer {
                    let dst = o * len * inner + start * inner;
                    d[dst..dst + width * inner]
                        .copy_from_slice(&gd[o * width * inner..(o + 1) * width * inner]);
                }
                acc(*a, Tensor::new(ta.shape().to_vec(), d).expect("shape"));
            }
            Op::Permute(a, perm) => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                acc(*a, permute_tensor(g, &inv));
            }
            Op::Gather(a, idx) => {
                let ta = val(*a);
                let mut d = vec![0.0; ta.len()];
                for (x, &i) in gd.iter().zip(idx.iter()) {
                    d[i] += x;
                }
                acc(*a, Tensor::new(ta.shape().to_vec(), d).expect("shape"));
            }
            Op::LogSumExp(a) => {
                let ta = val(*a);
                let last = *ta.shape().last().expect("rank >= 1");
                let out = node.value.data();
                let mut d = Vec::with_capacity(ta.len());
                for (r, row) in ta.data().chunks(last).enumerate() {
                    d.extend(row.iter().map(|x| gd[r] * (x - out[r]).exp()));
                }
                acc(*a, Tensor::new(ta.shape().to_vec(), d).expect("shape"));
            }
            Op::Custom(inputs, op) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                for (v, d) in inputs.iter().zip(op.backward(&values, &node.value, g)) {
                    acc(*v, d);
                }
            }
        }
    }
}
