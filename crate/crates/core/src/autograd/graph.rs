//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node appended after its inputs, so
//! node order is already a topological order and [`Graph::backward`] is a
//! single reverse sweep.

use crate::autograd::{Real, Tensor};
use crate::error::{bail, Result};
use crate::nn::kernels::{self, Geometry};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operation kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseKind<T> {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Scale(T),
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Scale(Var, T),
    ClampMax(Var, T),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Geometry,
        /// Unfolded input, kept when the weight needs a gradient.
        cols: Option<Vec<T>>,
    },
    ConvT { x: Var, w: Var, b: Option<Var>, geom: Geometry },
    MaxPool { x: Var, arg: Vec<u32> },
    Upsample(Var),
    GlobalAvgPool(Var),
    Affine { w: Var, x: Var, b: Var },
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Recorded computation.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Dimension, "{what}: shape {:?} vs {:?}", a.shape(), b.shape());
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("shapes checked by caller")
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        value.ensure_finite("leaf")?;
        Ok(self.push_unchecked(value, requires_grad, Op::Leaf))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.push_unchecked(Tensor::zeros(shape), false, Op::Leaf)
    }

    fn push_unchecked(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, requires_grad, op))
    }

    pub fn elementwise(&mut self, kind: ElementwiseKind<T>, a: Var, b: Option<Var>) -> Result<Var> {
        let binary = |g: &Self| -> Result<Var> {
            match b {
                Some(b) => {
                    same_shape(g.value(a), g.value(b), "elementwise")?;
                    Ok(b)
                }
                None => bail!(Contract, "binary elementwise op needs two operands"),
            }
        };
        match kind {
            ElementwiseKind::Add => {
                let b = binary(self)?;
                let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
                self.push(v, &[a, b], Op::Add(a, b), "add")
            }
            ElementwiseKind::Sub => {
                let b = binary(self)?;
                let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
                self.push(v, &[a, b], Op::Sub(a, b), "sub")
            }
            ElementwiseKind::Mul => {
                let b = binary(self)?;
                let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
                self.push(v, &[a, b], Op::Mul(a, b), "mul")
            }
            ElementwiseKind::Relu => {
                let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
                self.push(v, &[a], Op::Relu(a), "relu")
            }
            ElementwiseKind::Sigmoid => {
                let v = self.value(a).map(sigmoid);
                self.push(v, &[a], Op::Sigmoid(a), "sigmoid")
            }
            ElementwiseKind::Tanh => {
                let v = self.value(a).map(|x| x.tanh());
                self.push(v, &[a], Op::Tanh(a), "tanh")
            }
            ElementwiseKind::Scale(s) => {
                let v = self.value(a).map(|x| x * s);
                self.push(v, &[a], Op::Scale(a, s), "scale")
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Mul, a, Some(b))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Relu, a, None)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Sigmoid, a, None)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Tanh, a, None)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        self.elementwise(ElementwiseKind::Scale(s), a, None)
    }

    /// `min(a, limit)`; the gradient passes where `a < limit`.
    pub fn clamp_max(&mut self, a: Var, limit: T) -> Result<Var> {
        let v = self.value(a).map(|x| if x > limit { limit } else { x });
        self.push(v, &[a], Op::ClampMax(a, limit), "clamp_max")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(T::from_f64_lossy(self.value(a).sum_f64()));
        self.push(v, &[a], Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(T::from_f64_lossy(self.value(a).mean_f64()));
        self.push(v, &[a], Op::Mean(a), "mean")
    }

    /// Sum of many same-shaped nodes, left to right.
    pub fn add_all(&mut self, items: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = items.split_first() else {
            bail!(Contract, "add_all needs at least one operand");
        };
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            bail!(Contract, "concat needs at least one operand");
        };
        if parts.len() == 1 {
            return Ok(first);
        }
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                bail!(Dimension, "concat: {:?} vs trailing {:?}", t.shape(), tail);
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let v = Tensor::new(&shape, data)?;
        self.push(v, parts, Op::Concat(parts.to_vec()), "concat")
    }

    /// Rows `start..start+len` along the leading axis.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        if len == 0 || start + len > t.shape()[0] {
            bail!(Dimension, "slice {start}..{} of {:?}", start + len, t.shape());
        }
        let inner: usize = t.shape()[1..].iter().product();
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let v = Tensor::new(&shape, t.data()[start * inner..(start + len) * inner].to_vec())?;
        self.push(v, &[src], Op::Slice { src, start }, "slice")
    }

    pub(crate) fn conv_raw(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Geometry,
        transposed: bool,
    ) -> Result<Var> {
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut cols = None;
        let (data, shape) = if transposed {
            let mut d = kernels::conv_scatter(&geom, xv, wv);
            if let Some(bias) = bv {
                let plane = geom.h * geom.w;
                for (c, &bc) in bias.iter().enumerate() {
                    d[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += bc);
                }
            }
            (d, vec![geom.b, geom.h, geom.w])
        } else {
            let (d, c) = kernels::conv_gather_cols(&geom, xv, wv, bv);
            if self.wants(w) {
                cols = Some(c);
            }
            (d, vec![geom.a, geom.out_h(), geom.out_w()])
        };
        let value = Tensor::new(&shape, data)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let op = if transposed {
            Op::ConvT { x, w, b, geom }
        } else {
            Op::Conv { x, w, b, geom, cols }
        };
        self.push(value, &inputs, op, if transposed { "conv2d_transpose" } else { "conv2d" })
    }

    pub(crate) fn maxpool_raw(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if h % 2 != 0 || w % 2 != 0 {
            bail!(Dimension, "maxpool2 needs even extents, got {h}x{w}");
        }
        let (data, arg) = kernels::maxpool2(self.value(x).data(), c, h, w);
        let v = Tensor::new(&[c, h / 2, w / 2], data)?;
        self.push(v, &[x], Op::MaxPool { x, arg }, "maxpool2")
    }

    pub(crate) fn upsample_raw(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let v = Tensor::new(&[c, 2 * h, 2 * w], kernels::upsample2(self.value(x).data(), c, h, w))?;
        self.push(v, &[x], Op::Upsample(x), "upsample2")
    }

    /// `[C, H, W] -> [C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let plane = h * w;
        let d = self.value(x).data();
        let data = (0..c)
            .map(|ch| {
                let s: f64 = d[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).sum();
                T::from_f64_lossy(s / plane as f64)
            })
            .collect();
        let v = Tensor::new(&[c], data)?;
        self.push(v, &[x], Op::GlobalAvgPool(x), "global_avg_pool")
    }

    /// `W x + b` with `W: [M, N]`, `x: [N]`, `b: [M]`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (ws, xs, bs) = (self.shape(w), self.shape(x), self.shape(b));
        let (m, n) = match ws {
            [m, n] => (*m, *n),
            _ => bail!(Dimension, "affine weight must be 2-D, got {ws:?}"),
        };
        if xs != [n] || bs != [m] {
            bail!(Dimension, "affine: W {ws:?}, x {xs:?}, b {bs:?}");
        }
        let (wd, xd, bd) = (self.value(w).data(), self.value(x).data(), self.value(b).data());
        let data = (0..m)
            .map(|i| {
                let s: f64 = wd[i * n..(i + 1) * n]
                    .iter()
                    .zip(xd)
                    .map(|(p, q)| p.as_f64() * q.as_f64())
                    .sum();
                T::from_f64_lossy(s + bd[i].as_f64())
            })
            .collect();
        let v = Tensor::new(&[m], data)?;
        self.push(v, &[w, x, b], Op::Affine { w, x, b }, "affine")
    }

    /// Max-subtracted softmax over a vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::new(self.shape(x), softmax_values(self.value(x).data()))?;
        self.push(v, &[x], Op::Softmax(x), "softmax")
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let d = self.value(x).data();
        let m = d.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse: f64 = d.iter().map(|&v| (v - m).as_f64().exp()).sum::<f64>().ln();
        let data = d
            .iter()
            .map(|&v| T::from_f64_lossy((v - m).as_f64() - lse))
            .collect();
        let v = Tensor::new(self.shape(x), data)?;
        self.push(v, &[x], Op::LogSoftmax(x), "log_softmax")
    }

    /// Single element of a flat tensor, as a scalar node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let d = self.value(x).data();
        if index >= d.len() {
            bail!(Dimension, "pick index {index} out of {}", d.len());
        }
        let v = Tensor::scalar(d[index]);
        self.push(v, &[x], Op::Pick(x, index), "pick")
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            bail!(
                Contract,
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            );
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(i, &gy, &mut grads)?;
        }

        let mut out: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                g.ensure_finite("gradient")?;
                out[i] = Some(g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.wants(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, i: usize, gy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone())?;
                self.accumulate(grads, *b, gy.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone())?;
                if self.wants(*b) {
                    self.accumulate(grads, *b, gy.map(|v| -v))?;
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, zip_map(gy, self.value(*b), |g, x| g * x))?;
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, zip_map(gy, self.value(*a), |g, x| g * x))?;
                }
            }
            Op::Relu(a) => {
                let g = zip_map(gy, self.value(*a), |g, x| if x > T::zero() { g } else { T::zero() });
                self.accumulate(grads, *a, g)?;
            }
            Op::Sigmoid(a) => {
                let g = zip_map(gy, y, |g, s| g * s * (T::one() - s));
                self.accumulate(grads, *a, g)?;
            }
            Op::Tanh(a) => {
                let g = zip_map(gy, y, |g, t| g * (T::one() - t * t));
                self.accumulate(grads, *a, g)?;
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, gy.map(|g| g * s))?;
            }
            Op::ClampMax(a, limit) => {
                let limit = *limit;
                let g = zip_map(gy, self.value(*a), |g, x| if x < limit { g } else { T::zero() });
                self.accumulate(grads, *a, g)?;
            }
            Op::Sum(a) => {
                let g = Tensor::full(self.shape(*a), gy.data()[0]);
                self.accumulate(grads, *a, g)?;
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let g = Tensor::full(self.shape(*a), gy.data()[0] / T::from_usize(n).unwrap());
                self.accumulate(grads, *a, g)?;
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.wants(p) {
                        let g = Tensor::new(self.shape(p), gy.data()[offset..offset + len].to_vec())?;
                        self.accumulate(grads, p, g)?;
                    }
                    offset += len;
                }
            }
            Op::Slice { src, start } => {
                if self.wants(*src) {
                    let st = self.value(*src);
                    let inner: usize = st.shape()[1..].iter().product();
                    let acc = grads[src.0].get_or_insert_with(|| Tensor::zeros(st.shape()));
                    for (a, &g) in acc.data_mut()[start * inner..start * inner + gy.len()].iter_mut().zip(gy.data()) {
                        *a += g;
                    }
                }
            }
            Op::Conv { x, w, b, geom, cols } => {
                if self.wants(*x) {
                    let d = kernels::conv_scatter(geom, gy.data(), self.value(*w).data());
                    self.accumulate(grads, *x, Tensor::new(self.shape(*x), d)?)?;
                }
                if self.wants(*w) {
                    let d = match cols {
                        Some(c) => kernels::conv_weight_grad_cols(geom, gy.data(), c),
                        None => kernels::conv_weight_grad(geom, gy.data(), self.value(*x).data()),
                    };
                    self.accumulate(grads, *w, Tensor::new(self.shape(*w), d)?)?;
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let d = kernels::channel_sums(gy.data(), geom.a);
                        self.accumulate(grads, *b, Tensor::new(self.shape(*b), d)?)?;
                    }
                }
            }
            Op::ConvT { x, w, b, geom } => {
                if self.wants(*x) {
                    let d = kernels::conv_gather(geom, gy.data(), self.value(*w).data(), None);
                    self.accumulate(grads, *x, Tensor::new(self.shape(*x), d)?)?;
                }
                if self.wants(*w) {
                    let d = kernels::conv_weight_grad(geom, self.value(*x).data(), gy.data());
                    self.accumulate(grads, *w, Tensor::new(self.shape(*w), d)?)?;
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let d = kernels::channel_sums(gy.data(), geom.b);
                        self.accumulate(grads, *b, Tensor::new(self.shape(*b), d)?)?;
                    }
                }
            }
            Op::MaxPool { x, arg } => {
                let mut g = Tensor::zeros(self.shape(*x));
                let gd = g.data_mut();
                for (&src, &v) in arg.iter().zip(gy.data()) {
                    gd[src as usize] += v;
                }
                self.accumulate(grads, *x, g)?;
            }
            Op::Upsample(x) => {
                let (c, h, w) = self.value(*x).dims3()?;
                let d = kernels::upsample2_grad(gy.data(), c, h, w);
                self.accumulate(grads, *x, Tensor::new(&[c, h, w], d)?)?;
            }
            Op::GlobalAvgPool(x) => {
                let (c, h, w) = self.value(*x).dims3()?;
                let plane = h * w;
                let inv = T::one() / T::from_usize(plane).unwrap();
                let g = Tensor::from_fn(&[c, h, w], |i| gy.data()[i / plane] * inv);
                self.accumulate(grads, *x, g)?;
            }
            Op::Affine { w, x, b } => {
                let (wd, xd) = (self.value(*w).data(), self.value(*x).data());
                let n = xd.len();
                if self.wants(*w) {
                    let g = Tensor::from_fn(self.shape(*w), |k| gy.data()[k / n] * xd[k % n]);
                    self.accumulate(grads, *w, g)?;
                }
                if self.wants(*x) {
                    let m = gy.len();
                    let g = Tensor::from_fn(&[n], |j| {
                        T::from_f64_lossy(
                            (0..m).map(|i| gy.data()[i].as_f64() * wd[i * n + j].as_f64()).sum(),
                        )
                    });
                    self.accumulate(grads, *x, g)?;
                }
                self.accumulate(grads, *b, gy.clone())?;
            }
            Op::Softmax(x) => {
                let dot: f64 = gy.dot_f64(y)?;
                let dt = T::from_f64_lossy(dot);
                let g = zip_map(gy, y, |g, p| p * (g - dt));
                self.accumulate(grads, *x, g)?;
            }
            Op::LogSoftmax(x) => {
                let total = T::from_f64_lossy(gy.sum_f64());
                let g = zip_map(gy, y, |g, l| g - l.exp() * total);
                self.accumulate(grads, *x, g)?;
            }
            Op::Pick(x, index) => {
                let mut g = Tensor::zeros(self.shape(*x));
                g.data_mut()[*index] = gy.data()[0];
                self.accumulate(grads, *x, g)?;
            }
        }
        Ok(())
    }
}

/// Max-subtracted softmax of a slice.
pub fn softmax_values<T: Real>(d: &[T]) -> Vec<T> {
    let m = d.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<f64> = d.iter().map(|&v| (v - m).as_f64().exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|&v| T::from_f64_lossy(v / z)).collect()
}
