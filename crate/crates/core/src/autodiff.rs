//! Reverse-mode differentiation over a tape of small dense tensors.
//!
//! Every node holds a row-major `rows x cols` value; scalars are `1 x 1`.
//! Nodes are appended in evaluation order, so inputs always precede the node
//! that consumes them. A recorded tape can be re-evaluated after changing
//! leaf values with [`Tape::forward`], which lets an optimizer record its
//! graph once and reuse it every iteration.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Norm below which [`Tape::normalize`] reports degenerate geometry.
pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Construction(format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn scalar(v: T) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(v: &[T]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn from_rows<const C: usize>(rows: &[[T; C]]) -> Self {
        Self {
            rows: rows.len(),
            cols: C,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// Value of a `1 x 1` tensor (the first entry otherwise).
    pub fn item(&self) -> T {
        self.data[0]
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b)
    }

    fn norm(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
    }

    fn matmul(&self, other: &Self) -> Self {
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Self { rows: m, cols: n, data: out }
    }

    fn transpose(&self) -> Self {
        let mut out = vec![T::zero(); self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self { rows: self.cols, cols: self.rows, data: out }
    }

    fn vec3(&self) -> [T; 3] {
        [self.data[0], self.data[1], self.data[2]]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Named primitive operations accepted by [`Tape::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Norm,
    Sum,
    Dot,
    Cross,
    Skew,
    Normalize,
    Transpose,
}

impl Primitive {
    fn arity(&self) -> usize {
        use Primitive::*;
        match self {
            Add | Sub | Mul | Div | MatMul | Dot | Cross => 2,
            _ => 1,
        }
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Primitive::*;
        Ok(match s {
            "add" => Add,
            "sub" => Sub,
            "mul" => Mul,
            "div" => Div,
            "matmul" => MatMul,
            "sin" => Sin,
            "cos" => Cos,
            "tanh" => Tanh,
            "sqrt" => Sqrt,
            "norm" => Norm,
            "sum" => Sum,
            "dot" => Dot,
            "cross" => Cross,
            "skew" => Skew,
            "normalize" => Normalize,
            "transpose" => Transpose,
            other => return Err(Error::Construction(format!("unsupported primitive `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// `scale * x + shift`.
    Affine(usize, T, T),
    /// `1x1` scalar times tensor.
    ScalarMul(usize, usize),
    /// Tensor divided by a `1x1` scalar.
    ScalarDiv(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Sqrt(usize),
    Sum(usize),
    Norm(usize),
    Dot(usize, usize),
    Cross(usize, usize),
    Skew(usize),
    Normalize(usize),
    NormalizeOr(usize, [T; 3]),
    Slice(usize, usize, usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    /// Set when a `NormalizeOr` node substituted its fallback.
    fallback: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    stale: bool,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of `var`; zero when `var` does not reach the loss.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        match &self.adjoints[var.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn reached(&self, var: Var) -> bool {
        self.adjoints[var.0].is_some()
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Construction(format!(
            "{what}: shape {:?} does not match {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn is_scalar<T: Real>(t: &Tensor<T>, what: &str) -> Result<()> {
    if t.shape() != (1, 1) {
        return Err(Error::Construction(format!("{what}: expected a 1x1 scalar, got {:?}", t.shape())));
    }
    Ok(())
}

fn is_vec3<T: Real>(t: &Tensor<T>, what: &str) -> Result<()> {
    if t.data.len() != 3 {
        return Err(Error::Construction(format!("{what}: expected a 3-vector, got {:?}", t.shape())));
    }
    Ok(())
}

fn cross3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), stale: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn scalar_value(&self, var: Var) -> T {
        self.nodes[var.0].value.item()
    }

    /// Whether a fallback-normalization node used its fallback in the most
    /// recent evaluation.
    pub fn used_fallback(&self, var: Var) -> bool {
        self.nodes[var.0].fallback
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, fallback: false });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Replaces a leaf's value. The tape must be re-evaluated with
    /// [`Tape::forward`] before the next backward sweep.
    pub fn set_value(&mut self, var: Var, value: Tensor<T>) -> Result<()> {
        let node = &mut self.nodes[var.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::State(format!("node {} is not a leaf", var.0)));
        }
        same_shape(&node.value, &value, "set_value")?;
        node.value = value;
        self.stale = true;
        Ok(())
    }

    /// Re-evaluates every non-leaf node in recording order.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (value, fallback) = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
            self.nodes[i].fallback = fallback;
        }
        self.stale = false;
        Ok(())
    }

    fn push(&mut self, op: Op<T>) -> Result<Var> {
        let (value, fallback) = self.eval(&op)?;
        self.nodes.push(Node { op, value, fallback });
        Ok(Var(self.nodes.len() - 1))
    }

    fn v(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    fn eval(&self, op: &Op<T>) -> Result<(Tensor<T>, bool)> {
        let out = match *op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) => {
                same_shape(self.v(a), self.v(b), "add")?;
                self.v(a).zip(self.v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape(self.v(a), self.v(b), "sub")?;
                self.v(a).zip(self.v(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same_shape(self.v(a), self.v(b), "mul")?;
                self.v(a).zip(self.v(b), |x, y| x * y)
            }
            Op::Div(a, b) => {
                same_shape(self.v(a), self.v(b), "div")?;
                self.v(a).zip(self.v(b), |x, y| x / y)
            }
            Op::Affine(a, s, c) => self.v(a).map(|x| s * x + c),
            Op::ScalarMul(s, a) => {
                is_scalar(self.v(s), "scalar_mul")?;
                let k = self.v(s).item();
                self.v(a).map(|x| k * x)
            }
            Op::ScalarDiv(a, s) => {
                is_scalar(self.v(s), "scalar_div")?;
                let k = self.v(s).item();
                self.v(a).map(|x| x / k)
            }
            Op::MatMul(a, b) => {
                if self.v(a).cols != self.v(b).rows {
                    return Err(Error::Construction(format!(
                        "matmul: {:?} x {:?}",
                        self.v(a).shape(),
                        self.v(b).shape()
                    )));
                }
                self.v(a).matmul(self.v(b))
            }
            Op::Transpose(a) => self.v(a).transpose(),
            Op::Tanh(a) => self.v(a).map(|x| x.tanh()),
            Op::Sin(a) => self.v(a).map(|x| x.sin()),
            Op::Cos(a) => self.v(a).map(|x| x.cos()),
            Op::Sqrt(a) => self.v(a).map(|x| x.sqrt()),
            Op::Sum(a) => Tensor::scalar(self.v(a).sum()),
            Op::Norm(a) => Tensor::scalar(self.v(a).norm()),
            Op::Dot(a, b) => {
                same_shape(self.v(a), self.v(b), "dot")?;
                Tensor::scalar(self.v(a).zip(self.v(b), |x, y| x * y).sum())
            }
            Op::Cross(a, b) => {
                is_vec3(self.v(a), "cross")?;
                is_vec3(self.v(b), "cross")?;
                Tensor::column(&cross3(self.v(a).vec3(), self.v(b).vec3()))
            }
            Op::Skew(a) => {
                is_vec3(self.v(a), "skew")?;
                let [x, y, z] = self.v(a).vec3();
                let o = T::zero();
                Tensor::from_rows(&[[o, -z, y], [z, o, -x], [-y, x, o]])
            }
            Op::Normalize(a) => {
                let n = self.v(a).norm();
                if !(n >= T::lit(NORMALIZE_EPS)) {
                    return Err(Error::degenerate(format!("cannot normalize a vector of norm {n}")));
                }
                self.v(a).map(|x| x / n)
            }
            Op::NormalizeOr(a, fb) => {
                is_vec3(self.v(a), "normalize_or")?;
                let n = self.v(a).norm();
                if n >= T::lit(NORMALIZE_EPS) {
                    self.v(a).map(|x| x / n)
                } else {
                    return Ok((Tensor::column(&fb), true));
                }
            }
            Op::Slice(a, start, len) => {
                let src = self.v(a);
                if start + len > src.data.len() {
                    return Err(Error::Construction(format!(
                        "slice {start}..{} out of {} values",
                        start + len,
                        src.data.len()
                    )));
                }
                Tensor::column(&src.data[start..start + len])
            }
        };
        Ok((out, false))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a.0, b.0))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Div(a.0, b.0))
    }

    /// `scale * a + shift` with constant coefficients.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Result<Var> {
        self.push(Op::Affine(a.0, scale, shift))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Result<Var> {
        self.affine(a, k, T::zero())
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -T::one(), T::zero())
    }

    pub fn scalar_mul(&mut self, s: Var, a: Var) -> Result<Var> {
        self.push(Op::ScalarMul(s.0, a.0))
    }

    pub fn scalar_div(&mut self, a: Var, s: Var) -> Result<Var> {
        self.push(Op::ScalarDiv(a.0, s.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a.0, b.0))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Tanh(a.0))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sin(a.0))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Cos(a.0))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sqrt(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a.0))
    }

    pub fn norm(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Norm(a.0))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Dot(a.0, b.0))
    }

    pub fn cross(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Cross(a.0, b.0))
    }

    /// 3x3 cross-product matrix of a 3-vector.
    pub fn skew(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Skew(a.0))
    }

    /// `a / |a|`; fails with a degenerate-geometry error when `|a|` is
    /// below [`NORMALIZE_EPS`].
    pub fn normalize(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Normalize(a.0))
    }

    /// Like [`Tape::normalize`] for 3-vectors, but substitutes the constant
    /// `fallback` (with zero gradient) instead of failing.
    pub fn normalize_or(&mut self, a: Var, fallback: [T; 3]) -> Result<Var> {
        self.push(Op::NormalizeOr(a.0, fallback))
    }

    /// Column vector of `len` consecutive row-major entries of `a`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::Slice(a.0, start, len))
    }

    pub fn square_norm(&mut self, a: Var) -> Result<Var> {
        self.dot(a, a)
    }

    /// Applies a primitive by name.
    pub fn apply(&mut self, name: &str, inputs: &[Var]) -> Result<Var> {
        let prim: Primitive = name.parse()?;
        if inputs.len() != prim.arity() {
            return Err(Error::Construction(format!(
                "`{name}` takes {} inputs, got {}",
                prim.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        let b = inputs.get(1).copied().unwrap_or(a);
        match prim {
            Primitive::Add => self.add(a, b),
            Primitive::Sub => self.sub(a, b),
            Primitive::Mul => {
                if self.value(a).shape() == (1, 1) && self.value(b).shape() != (1, 1) {
                    self.scalar_mul(a, b)
                } else {
                    self.mul(a, b)
                }
            }
            Primitive::Div => {
                if self.value(b).shape() == (1, 1) && self.value(a).shape() != (1, 1) {
                    self.scalar_div(a, b)
                } else {
                    self.div(a, b)
                }
            }
            Primitive::MatMul => self.matmul(a, b),
            Primitive::Sin => self.sin(a),
            Primitive::Cos => self.cos(a),
            Primitive::Tanh => self.tanh(a),
            Primitive::Sqrt => self.sqrt(a),
            Primitive::Norm => self.norm(a),
            Primitive::Sum => self.sum(a),
            Primitive::Dot => self.dot(a, b),
            Primitive::Cross => self.cross(a, b),
            Primitive::Skew => self.skew(a),
            Primitive::Normalize => self.normalize(a),
            Primitive::Transpose => self.transpose(a),
        }
    }

    /// Reverse sweep from the scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.stale {
            return Err(Error::State("leaf values changed; call forward() before backward()".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!("node {} is not on this tape", loss.0)));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::State("backward requires a scalar loss node".into()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            let mut acc = |idx: usize, t: Tensor<T>| match &mut adj[idx] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(a, g.clone());
                    acc(b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(a, g.clone());
                    acc(b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(a, g.zip(self.v(b), |g, b| g * b));
                    acc(b, g.zip(self.v(a), |g, a| g * a));
                }
                Op::Div(a, b) => {
                    acc(a, g.zip(self.v(b), |g, b| g / b));
                    let t = g.zip(y, |g, y| g * y).zip(self.v(b), |gy, b| -gy / b);
                    acc(b, t);
                }
                Op::Affine(a, s, _) => acc(a, g.map(|x| x * s)),
                Op::ScalarMul(s, a) => {
                    let k = self.v(s).item();
                    acc(s, Tensor::scalar(g.zip(self.v(a), |g, a| g * a).sum()));
                    acc(a, g.map(|x| x * k));
                }
                Op::ScalarDiv(a, s) => {
                    let k = self.v(s).item();
                    acc(a, g.map(|x| x / k));
                    acc(s, Tensor::scalar(-g.zip(y, |g, y| g * y).sum() / k));
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.v(a), self.v(b));
                    acc(a, g.matmul(&bv.transpose()));
                    acc(b, av.transpose().matmul(&g));
                }
                Op::Transpose(a) => acc(a, g.transpose()),
                Op::Tanh(a) => acc(a, g.zip(y, |g, y| g * (T::one() - y * y))),
                Op::Sin(a) => acc(a, g.zip(self.v(a), |g, x| g * x.cos())),
                Op::Cos(a) => acc(a, g.zip(self.v(a), |g, x| -g * x.sin())),
                Op::Sqrt(a) => acc(a, g.zip(y, |g, y| g / (y + y))),
                Op::Sum(a) => {
                    let k = g.item();
                    let (r, c) = self.v(a).shape();
                    acc(a, Tensor { rows: r, cols: c, data: vec![k; r * c] });
                }
                Op::Norm(a) => {
                    let n = y.item();
                    let k = g.item();
                    let t = if n > T::zero() {
                        self.v(a).map(|x| k * x / n)
                    } else {
                        let (r, c) = self.v(a).shape();
                        Tensor::zeros(r, c)
                    };
                    acc(a, t);
                }
                Op::Dot(a, b) => {
                    let k = g.item();
                    acc(a, self.v(b).map(|x| k * x));
                    acc(b, self.v(a).map(|x| k * x));
                }
                Op::Cross(a, b) => {
                    let gv = g.vec3();
                    let ga = cross3(self.v(b).vec3(), gv);
                    let gb = cross3(gv, self.v(a).vec3());
                    acc(a, Tensor { rows: self.v(a).rows, cols: self.v(a).cols, data: ga.to_vec() });
                    acc(b, Tensor { rows: self.v(b).rows, cols: self.v(b).cols, data: gb.to_vec() });
                }
                Op::Skew(a) => {
                    let m = |r: usize, c: usize| g.get(r, c);
                    let d = [m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)];
                    acc(a, Tensor { rows: self.v(a).rows, cols: self.v(a).cols, data: d.to_vec() });
                }
                Op::Normalize(a) | Op::NormalizeOr(a, _) => {
                    if node.fallback {
                        continue;
                    }
                    let n = self.v(a).norm();
                    let yg = y.zip(&g, |y, g| y * g).sum();
                    let t = g.zip(y, |g, y| (g - y * yg) / n);
                    acc(a, Tensor { rows: self.v(a).rows, cols: self.v(a).cols, data: t.data });
                }
                Op::Slice(a, start, len) => {
                    let (r, c) = self.v(a).shape();
                    let mut t = Tensor::zeros(r, c);
                    t.data[start..start + len].copy_from_slice(&g.data);
                    acc(a, t);
                }
            }
            adj[i] = Some(g);
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn square_primal_and_derivative() {
        let mut t = Tape::new();
        let x = t.scalar(3.0);
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.scalar_value(y), 9.0);
        assert_eq!(t.backward(y).unwrap().wrt(x).item(), 6.0);
    }

    #[test]
    fn sin_and_tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.scalar(0.0);
        let s = t.sin(x).unwrap();
        assert_eq!(t.scalar_value(s), 0.0);
        let th = t.tanh(x).unwrap();
        assert_eq!(t.backward(th).unwrap().wrt(x).item(), 1.0);
    }

    #[test]
    fn unsupported_primitive_is_a_construction_error() {
        let mut t = Tape::<f64>::new();
        let x = t.scalar(1.0);
        assert!(matches!(t.apply("exp", &[x]), Err(Error::Construction(_))));
        assert!(matches!(t.apply("add", &[x]), Err(Error::Construction(_))));
        let y = t.apply("sin", &[x]).unwrap();
        assert!((t.scalar_value(y) - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::zeros(2, 3));
        let b = t.leaf(Tensor::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        let c = t.leaf(Tensor::zeros(3, 2));
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn backward_requires_fresh_forward() {
        let mut t = Tape::new();
        let x = t.scalar(2.0);
        let y = t.mul(x, x).unwrap();
        t.set_value(x, Tensor::scalar(5.0)).unwrap();
        assert!(matches!(t.backward(y), Err(Error::State(_))));
        t.forward().unwrap();
        assert_eq!(t.scalar_value(y), 25.0);
        assert_eq!(t.backward(y).unwrap().wrt(x).item(), 10.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let v = t.leaf(Tensor::column(&[1.0, 2.0]));
        assert!(matches!(t.backward(v), Err(Error::State(_))));
    }

    #[test]
    fn unreachable_leaf_has_zero_adjoint() {
        let mut t = Tape::new();
        let x = t.scalar(2.0);
        let unused = t.leaf(Tensor::column(&[1.0, 2.0, 3.0]));
        let y = t.sin(x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(!g.reached(unused));
        assert_eq!(g.wrt(unused), Tensor::zeros(3, 1));
    }

    #[test]
    fn normalize_guards_degenerate_vectors() {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::column(&[0.0, 1e-10, 0.0]));
        assert!(matches!(t.normalize(v), Err(Error::DegenerateGeometry(_))));
        let n = t.normalize_or(v, [1.0, 0.0, 0.0]).unwrap();
        assert!(t.used_fallback(n));
        let s = t.sum(n).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(v), Tensor::zeros(3, 1));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let a0 = [[0.3, -1.2, 0.5], [2.0, 0.1, -0.7]];
        let b0 = [[1.0], [0.4], [-2.0]];
        let build = |a: &[[f64; 3]; 2]| {
            let mut t = Tape::new();
            let av = t.leaf(Tensor::from_rows(a));
            let bv = t.leaf(Tensor::from_rows(&b0));
            let c = t.matmul(av, bv).unwrap();
            let th = t.tanh(c).unwrap();
            let s = t.sum(th).unwrap();
            (t, av, s)
        };
        let (t, av, s) = build(&a0);
        let g = t.backward(s).unwrap().wrt(av);
        for r in 0..2 {
            for c in 0..3 {
                let f = |x: f64| {
                    let mut a = a0;
                    a[r][c] = x;
                    let (t, _, s) = build(&a);
                    t.scalar_value(s)
                };
                assert!(rel(g.get(r, c), fd(f, a0[r][c])) < 1e-6);
            }
        }
    }

    /// Evaluates `op` on a single input vector, then reduces with a fixed
    /// weighting so every output entry contributes to the scalar.
    fn unary_case(op: &str, x: &[f64]) -> (f64, Vec<f64>) {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::column(x));
        let y = t.apply(op, &[v]).unwrap();
        let (r, c) = t.value(y).shape();
        let w: Vec<f64> = (0..r * c).map(|i| 0.5 + 0.25 * i as f64).collect();
        let wv = t.leaf(Tensor::new(r, c, w).unwrap());
        let p = t.mul(y, wv).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap().wrt(v).into_data();
        (t.scalar_value(s), g)
    }

    fn binary_case(op: &str, x: &[f64], z: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::column(x));
        let b = t.leaf(Tensor::column(z));
        let y = t.apply(op, &[a, b]).unwrap();
        let (r, c) = t.value(y).shape();
        let w: Vec<f64> = (0..r * c).map(|i| 0.5 + 0.25 * i as f64).collect();
        let wv = t.leaf(Tensor::new(r, c, w).unwrap());
        let p = t.mul(y, wv).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        (t.scalar_value(s), g.wrt(a).into_data(), g.wrt(b).into_data())
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.2f64..2.0, 3)
    }

    proptest! {
        #[test]
        fn unary_primitives_match_finite_differences(x in vec3(), which in 0usize..7) {
            let op = ["sin", "cos", "tanh", "sqrt", "norm", "skew", "normalize"][which];
            let (_, g) = unary_case(op, &x);
            for k in 0..3 {
                let f = |h: f64| { let mut y = x.clone(); y[k] = h; unary_case(op, &y).0 };
                prop_assert!(rel(g[k], fd(f, x[k])) < 1e-6, "{op} component {k}");
            }
        }

        #[test]
        fn binary_primitives_match_finite_differences(x in vec3(), z in vec3(), which in 0usize..6) {
            let op = ["add", "sub", "mul", "div", "dot", "cross"][which];
            let (_, ga, gb) = binary_case(op, &x, &z);
            for k in 0..3 {
                let fa = |h: f64| { let mut y = x.clone(); y[k] = h; binary_case(op, &y, &z).0 };
                let fb = |h: f64| { let mut y = z.clone(); y[k] = h; binary_case(op, &x, &y).0 };
                prop_assert!(rel(ga[k], fd(fa, x[k])) < 1e-6, "{op} lhs {k}");
                prop_assert!(rel(gb[k], fd(fb, z[k])) < 1e-6, "{op} rhs {k}");
            }
        }

        #[test]
        fn gradient_is_linear(x in vec3(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let grad_of = |ka: f64, kb: f64| {
                let mut t = Tape::new();
                let v = t.leaf(Tensor::column(&x));
                let f = t.tanh(v).unwrap();
                let f = t.sum(f).unwrap();
                let n = t.norm(v).unwrap();
                let g = t.sin(n).unwrap();
                let fa = t.scale(f, ka).unwrap();
                let gb = t.scale(g, kb).unwrap();
                let s = t.add(fa, gb).unwrap();
                t.backward(s).unwrap().wrt(v).into_data()
            };
            let combined = grad_of(a, b);
            let gf = grad_of(1.0, 0.0);
            let gg = grad_of(0.0, 1.0);
            for k in 0..3 {
                prop_assert!((combined[k] - (a * gf[k] + b * gg[k])).abs() <= 1e-12);
            }
        }

        #[test]
        fn gradients_are_deterministic(x in vec3()) {
            let run = || unary_case("normalize", &x).1;
            let first = run();
            let second = run();
            prop_assert_eq!(first.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            second.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn scalar_broadcast_ops_match_finite_differences() {
        let x = [0.4, -1.1, 0.8];
        let eval = |s: f64, x: [f64; 3]| {
            let mut t = Tape::new();
            let sv = t.scalar(s);
            let v = t.leaf(Tensor::column(&x));
            let m = t.scalar_mul(sv, v).unwrap();
            let d = t.scalar_div(m, sv).unwrap();
            let d2 = t.scalar_div(v, sv).unwrap();
            let a = t.add(d, m).unwrap();
            let a = t.add(a, d2).unwrap();
            let sl = t.slice(a, 1, 2).unwrap();
            let tr = t.transpose(sl).unwrap();
            let p = t.matmul(tr, sl).unwrap();
            let s = t.sum(p).unwrap();
            let out = t.scalar_value(s);
            let g = t.backward(s).unwrap();
            (out, g.wrt(sv).item(), g.wrt(v).into_data())
        };
        let s0 = 1.7;
        let (_, gs, gv) = eval(s0, x);
        assert!(rel(gs, fd(|h| eval(h, x).0, s0)) < 1e-6);
        for k in 0..3 {
            let f = |h: f64| {
                let mut y = x;
                y[k] = h;
                eval(s0, y).0
            };
            assert!((gv[k] - fd(f, x[k])).abs() < 1e-7);
        }
    }
}
