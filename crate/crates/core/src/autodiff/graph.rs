use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearities available to networks and cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub(crate) fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(S::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// First derivative written in terms of the activation's output `y`.
    pub(crate) fn deriv_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => S::one() - y * y,
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => y - y * y,
            Activation::Identity => S::one(),
        }
    }

    /// d/dy of [`Self::deriv_from_output`].
    pub(crate) fn deriv2_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => -(y + y),
            Activation::Sigmoid => S::one() - (y + y),
            Activation::Relu | Activation::Identity => S::zero(),
        }
    }

    /// d/dy of [`Self::deriv2_from_output`] (a constant).
    pub(crate) fn deriv3_const<S: Scalar>(self) -> S {
        match self {
            Activation::Tanh | Activation::Sigmoid => S::lit(-2.0),
            Activation::Relu | Activation::Identity => S::zero(),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Activation assignment over the last axis: one kind everywhere, or one kind per column.
#[derive(Clone, Debug, PartialEq)]
pub enum ActSpec {
    Uniform(Activation),
    PerColumn(Rc<[Activation]>),
}

impl ActSpec {
    #[inline]
    pub(crate) fn kind(&self, col: usize) -> Activation {
        match self {
            ActSpec::Uniform(a) => *a,
            ActSpec::PerColumn(v) => v[col],
        }
    }
}

/// Operation record of a node. Inputs are node ids; derivative rules read the
/// inputs' and the node's own stored values rather than copying them.
#[derive(Clone, Debug)]
pub(crate) enum Op<S> {
    Leaf,
    /// `op(a)·op(b)` with optional transposes. Saves: both inputs.
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add(usize, usize),
    Sub(usize, usize),
    /// Saves: both inputs.
    Mul(usize, usize),
    /// Saves: denominator and output.
    Div(usize, usize),
    Neg(usize),
    Scale(usize, S),
    AddConst(usize, S),
    /// Multiplies column `j` of the last axis by `factors[j]`.
    ColScale(usize, Rc<[S]>),
    /// Saves: output.
    Act(usize, ActSpec),
    /// Activation derivative from the activation output. Saves: its input.
    ActDeriv(usize, ActSpec),
    /// Saves: nothing beyond the activation spec (third derivative is constant).
    ActDeriv2(usize, ActSpec),
    /// Saves: input.
    Log(usize),
    /// Saves: output.
    Exp(usize),
    /// Saves: output.
    Sqrt(usize),
    /// Saves: input.
    Square(usize),
    /// Row-wise softmax of a 2-D tensor. Saves: output.
    Softmax(usize),
    Sum(usize),
    Mean(usize),
    /// `(r, c) -> (1, c)`
    SumRows(usize),
    /// `(1, c) -> (r, c)`
    BroadcastRows(usize),
    /// `(r, c) -> (r, 1)`
    SumCols(usize),
    /// `(r, 1) -> (r, c)`
    BroadcastCols(usize),
    /// one-element tensor -> any shape
    BroadcastScalar(usize),
    Reshape(usize),
    Concat(Vec<usize>, usize),
    Slice { input: usize, axis: usize, start: usize },
    /// Adjoint of `Slice`: embeds the input into zeros along `axis`.
    SliceAdjoint { input: usize, axis: usize, start: usize },
    /// `x: (r, B·p)`, `w: (B, p, q)` -> `(r, B·q)`, block `n` of x times `w[n]`. Saves: both inputs.
    BlockMatMul(usize, usize),
    /// `x: (r, B·p)`, `g: (r, B·q)` -> `(B, p, q)` with `out[n] = x_nᵀ g_n`. Saves: both inputs.
    BlockOuter(usize, usize),
    /// `(B, p, q) -> (B, q, p)`
    BlockTranspose(usize),
    /// Column block `n` copied from `parts[choice[n]]`.
    BlockSelect(Vec<usize>, Rc<[usize]>),
}

impl<S> Op<S> {
    pub(crate) fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b, .. } => vec![*a, *b],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | BlockMatMul(a, b) | BlockOuter(a, b) => {
                vec![*a, *b]
            }
            Neg(a) | Scale(a, _) | AddConst(a, _) | ColScale(a, _) | Act(a, _) | ActDeriv(a, _)
            | ActDeriv2(a, _) | Log(a) | Exp(a) | Sqrt(a) | Square(a) | Softmax(a) | Sum(a)
            | Mean(a) | SumRows(a) | BroadcastRows(a) | SumCols(a) | BroadcastCols(a)
            | BroadcastScalar(a) | Reshape(a) | BlockTranspose(a) => vec![*a],
            Slice { input, .. } | SliceAdjoint { input, .. } => vec![*input],
            Concat(v, _) | BlockSelect(v, _) => v.clone(),
        }
    }
}

pub(crate) struct Node<S> {
    pub(crate) value: Tensor<S>,
    pub(crate) op: Op<S>,
    pub(crate) requires_grad: bool,
}

/// Append-only computation graph with reverse-mode differentiation.
///
/// Node ids are assigned in creation order, so inputs always precede outputs.
/// While gradient recording is disabled every new node is a constant.
pub struct Graph<S> {
    pub(crate) nodes: Vec<Node<S>>,
    pub(crate) grad_enabled: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn dims2(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match s {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

fn zip<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Enables or disables recording; returns the previous setting.
    pub fn set_grad_enabled(&mut self, on: bool) -> bool {
        std::mem::replace(&mut self.grad_enabled, on)
    }

    /// Runs `f` with recording disabled.
    pub fn no_grad<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let prev = self.set_grad_enabled(false);
        let out = f(self);
        self.set_grad_enabled(prev);
        out
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar_constant(&mut self, v: S) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> Result<S> {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        let requires_grad =
            self.grad_enabled && op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    // ---- arithmetic -------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.shape(a), self.shape(b))?;
        let v = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.shape(a), self.shape(b))?;
        let v = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.shape(a), self.shape(b))?;
        let v = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("div", self.shape(a), self.shape(b))?;
        let v = zip(self.value(a), self.value(b), |x, y| x / y);
        Ok(self.push(v, Op::Div(a.0, b.0)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a.0), |x| -x)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, k: S) -> Var {
        self.unary(a, Op::Scale(a.0, k), |x| x * k)
    }

    /// Adds a constant.
    pub fn add_const(&mut self, a: Var, k: S) -> Var {
        self.unary(a, Op::AddConst(a.0, k), |x| x + k)
    }

    /// Multiplies column `j` of the last axis by `factors[j]` (constants).
    pub fn col_scale(&mut self, a: Var, factors: Rc<[S]>) -> Result<Var> {
        let cols = self.value(a).last_dim();
        if factors.len() != cols {
            return Err(Error::shape(
                "col_scale",
                format!("{} factors for {cols} columns", factors.len()),
            ));
        }
        let t = self.value(a);
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * factors[i % cols])
            .collect();
        let v = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(v, Op::ColScale(a.0, factors)))
    }

    /// Plain matrix product of two matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a)·op(b)` where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = dims2("matmul", self.shape(a))?;
        let (br, bc) = dims2("matmul", self.shape(b))?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{:?}{} x {:?}{}",
                    self.shape(a),
                    if ta { "ᵀ" } else { "" },
                    self.shape(b),
                    if tb { "ᵀ" } else { "" }
                ),
            ));
        }
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            ta,
            self.value(b).data(),
            tb,
            &mut out,
        );
        let v = Tensor::from_parts(vec![m, n], out);
        Ok(self.push(
            v,
            Op::MatMul {
                a: a.0,
                b: b.0,
                ta,
                tb,
            },
        ))
    }

    // ---- nonlinearities ---------------------------------------------------

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        self.unary(a, Op::Act(a.0, ActSpec::Uniform(kind)), |x| kind.apply(x))
    }

    /// Applies `kinds[j]` to column `j` of the last axis.
    pub fn column_activation(&mut self, a: Var, kinds: Rc<[Activation]>) -> Result<Var> {
        let cols = self.value(a).last_dim();
        if kinds.len() != cols {
            return Err(Error::shape(
                "column_activation",
                format!("{} kinds for {cols} columns", kinds.len()),
            ));
        }
        let t = self.value(a);
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| kinds[i % cols].apply(x))
            .collect();
        let v = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(v, Op::Act(a.0, ActSpec::PerColumn(kinds))))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// `1 / (1 + exp(-c·x))`.
    pub fn sigmoid_slope(&mut self, a: Var, slope: S) -> Var {
        let z = self.scale(a, slope);
        self.sigmoid(z)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn identity(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Identity)
    }

    pub(crate) fn act_deriv(&mut self, y: Var, spec: ActSpec) -> Var {
        let t = self.value(y);
        let cols = t.last_dim();
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| spec.kind(i % cols).deriv_from_output(v))
            .collect();
        let v = Tensor::from_parts(t.shape().to_vec(), data);
        self.push(v, Op::ActDeriv(y.0, spec))
    }

    pub(crate) fn act_deriv2(&mut self, y: Var, spec: ActSpec) -> Var {
        let t = self.value(y);
        let cols = t.last_dim();
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| spec.kind(i % cols).deriv2_from_output(v))
            .collect();
        let v = Tensor::from_parts(t.shape().to_vec(), data);
        self.push(v, Op::ActDeriv2(y.0, spec))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a.0), |x| x.ln())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), |x| x.exp())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a.0), |x| x.sqrt())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (_, c) = dims2("softmax", self.shape(a))?;
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.len());
        for row in t.data().chunks(c.max(1)) {
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let e: Vec<S> = row.iter().map(|&x| (x - m).exp()).collect();
            let z: S = e.iter().copied().sum();
            data.extend(e.into_iter().map(|v| v / z));
        }
        let v = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(v, Op::Softmax(a.0)))
    }

    // ---- reductions and broadcasts -----------------------------------------

    /// Sum of all elements, rank-0 result.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = S::from_usize(t.len()).unwrap();
        let s: S = t.data().iter().copied().sum();
        self.push(Tensor::scalar(s / n), Op::Mean(a.0))
    }

    /// `(r, c) -> (1, c)`
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2("sum_rows", self.shape(a))?;
        let t = self.value(a);
        let mut out = vec![S::zero(); c];
        for i in 0..r {
            for (o, &x) in out.iter_mut().zip(&t.data()[i * c..(i + 1) * c]) {
                *o = *o + x;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![1, c], out), Op::SumRows(a.0)))
    }

    /// `(1, c) -> (rows, c)`
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (r, c) = dims2("broadcast_rows", self.shape(a))?;
        if r != 1 {
            return Err(Error::shape("broadcast_rows", format!("expected (1, c), got ({r}, {c})")));
        }
        let row = self.value(a).data();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(row);
        }
        Ok(self.push(Tensor::from_parts(vec![rows, c], out), Op::BroadcastRows(a.0)))
    }

    /// `(r, c) -> (r, 1)`
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2("sum_cols", self.shape(a))?;
        let out = self
            .value(a)
            .data()
            .chunks(c.max(1))
            .map(|row| row.iter().copied().sum())
            .collect::<Vec<S>>();
        debug_assert_eq!(out.len(), r);
        Ok(self.push(Tensor::from_parts(vec![r, 1], out), Op::SumCols(a.0)))
    }

    /// `(r, 1) -> (r, cols)`
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let (r, c) = dims2("broadcast_cols", self.shape(a))?;
        if c != 1 {
            return Err(Error::shape("broadcast_cols", format!("expected (r, 1), got ({r}, {c})")));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, cols))
            .collect();
        Ok(self.push(Tensor::from_parts(vec![r, cols], out), Op::BroadcastCols(a.0)))
    }

    /// Expands a one-element tensor to `shape`.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).item().map_err(|_| {
            Error::shape(
                "broadcast_scalar",
                format!("source must hold one element, shape is {:?}", self.shape(a)),
            )
        })?;
        Ok(self.push(Tensor::full(shape, v), Op::BroadcastScalar(a.0)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a.0)))
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.len() != base.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i])
            {
                return Err(Error::shape("concat", format!("{base:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
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
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat(parts.iter().map(|p| p.0).collect(), axis),
        ))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("{start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let t = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&t[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Slice {
                input: a.0,
                axis,
                start,
            },
        ))
    }

    pub(crate) fn slice_adjoint(&mut self, a: Var, axis: usize, start: usize, full: usize) -> Var {
        let shape = self.shape(a).to_vec();
        let len = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![S::zero(); outer * full * inner];
        let t = self.value(a).data();
        for o in 0..outer {
            let dst = (o * full + start) * inner;
            data[dst..dst + len * inner].copy_from_slice(&t[o * len * inner..(o + 1) * len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = full;
        self.push(
            Tensor::from_parts(out_shape, data),
            Op::SliceAdjoint {
                input: a.0,
                axis,
                start,
            },
        )
    }

    // ---- block-diagonal products -------------------------------------------

    fn block_dims(&self, op: &'static str, w: Var) -> Result<(usize, usize, usize)> {
        match self.shape(w) {
            [b, p, q] => Ok((*b, *p, *q)),
            s => Err(Error::shape(op, format!("expected (blocks, p, q), got {s:?}"))),
        }
    }

    /// Block-diagonal product: column block `n` of `x` (width `p`) times `w[n]` (`p×q`).
    pub fn block_matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (nb, p, q) = self.block_dims("block_matmul", w)?;
        let (r, c) = dims2("block_matmul", self.shape(x))?;
        if c != nb * p {
            return Err(Error::shape(
                "block_matmul",
                format!("x {:?} vs blocks {:?}", self.shape(x), self.shape(w)),
            ));
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![S::zero(); r * nb * q];
        for n in 0..nb {
            let wn = &wv[n * p * q..(n + 1) * p * q];
            for i in 0..r {
                let xrow = &xv[i * c + n * p..i * c + (n + 1) * p];
                let orow = &mut out[i * nb * q + n * q..i * nb * q + (n + 1) * q];
                for (k, &xk) in xrow.iter().enumerate() {
                    for (o, &wk) in orow.iter_mut().zip(&wn[k * q..(k + 1) * q]) {
                        *o = *o + xk * wk;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![r, nb * q], out),
            Op::BlockMatMul(x.0, w.0),
        ))
    }

    /// `out[n] = x_nᵀ · g_n` for column blocks `x_n: r×p`, `g_n: r×q`.
    pub fn block_outer(&mut self, x: Var, g: Var, blocks: usize) -> Result<Var> {
        let (r, cx) = dims2("block_outer", self.shape(x))?;
        let (rg, cg) = dims2("block_outer", self.shape(g))?;
        if r != rg || blocks == 0 || cx % blocks != 0 || cg % blocks != 0 {
            return Err(Error::shape(
                "block_outer",
                format!("{:?} and {:?} in {blocks} blocks", self.shape(x), self.shape(g)),
            ));
        }
        let (p, q) = (cx / blocks, cg / blocks);
        let xv = self.value(x).data();
        let gv = self.value(g).data();
        let mut out = vec![S::zero(); blocks * p * q];
        for n in 0..blocks {
            let on = &mut out[n * p * q..(n + 1) * p * q];
            for i in 0..r {
                let xrow = &xv[i * cx + n * p..i * cx + (n + 1) * p];
                let grow = &gv[i * cg + n * q..i * cg + (n + 1) * q];
                for (k, &xk) in xrow.iter().enumerate() {
                    for (o, &gj) in on[k * q..(k + 1) * q].iter_mut().zip(grow) {
                        *o = *o + xk * gj;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![blocks, p, q], out),
            Op::BlockOuter(x.0, g.0),
        ))
    }

    pub fn block_transpose(&mut self, w: Var) -> Result<Var> {
        let (nb, p, q) = self.block_dims("block_transpose", w)?;
        let wv = self.value(w).data();
        let mut out = vec![S::zero(); nb * p * q];
        for n in 0..nb {
            for i in 0..p {
                for j in 0..q {
                    out[n * p * q + j * p + i] = wv[n * p * q + i * q + j];
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![nb, q, p], out),
            Op::BlockTranspose(w.0),
        ))
    }

    /// Assembles column block `n` from `parts[choice[n]]`; all parts share one shape.
    pub fn block_select(&mut self, parts: &[Var], choice: Rc<[usize]>) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("block_select", "no inputs"))?;
        let shape = self.shape(*first).to_vec();
        let (r, c) = dims2("block_select", &shape)?;
        let nb = choice.len();
        if nb == 0 || c % nb != 0 || choice.iter().any(|&k| k >= parts.len()) {
            return Err(Error::shape(
                "block_select",
                format!("{c} columns, {nb} blocks, {} parts", parts.len()),
            ));
        }
        for p in parts {
            check_same("block_select", &shape, self.shape(*p))?;
        }
        let w = c / nb;
        let mut out = vec![S::zero(); r * c];
        for (n, &k) in choice.iter().enumerate() {
            let src = self.value(parts[k]).data();
            for i in 0..r {
                let at = i * c + n * w;
                out[at..at + w].copy_from_slice(&src[at..at + w]);
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::BlockSelect(parts.iter().map(|p| p.0).collect(), choice),
        ))
    }
}
