//! Reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node to a [`Tape`] holding its value and the
//! references needed to push gradients back to its inputs. Nodes are only
//! ever appended, so parents always precede children and a single reverse
//! sweep visits them in topological order.

use std::rc::Rc;

use super::linalg::{col2im, gemm, im2col, ConvGeometry};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Padding mode for stride-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Normalization statistics returned by a batch-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, the value folded into running aggregates.
    pub var: Vec<f64>,
}

/// How a batch-norm node normalizes its input.
#[derive(Debug, Clone, Copy)]
pub enum NormSource<'a> {
    Batch,
    Frozen { mean: &'a [f64], var: &'a [f64] },
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    MulConst(Var, Rc<Vec<f64>>),
    ScaleBy(Var, Var),
    Recip(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var, usize),
    Reshape(Var),
    Gather(Var, Rc<Vec<usize>>),
    Concat(Vec<Var>),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        layout: (usize, usize, usize),
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    /// Leaf that accumulates a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0].as_ref().map(|g| {
            Tensor::new(self.nodes[v.0].value.shape(), g.clone()).expect("gradient shape")
        })
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var], name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, name: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{name}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, op: Op, name: &str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value(x).map(f);
        self.push(value, op, &[x], name)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape(), data)?;
        self.push(value, op, &[a, b], name)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (m as isize, 1),
            &mut out,
            (m as isize, 1),
            0.0,
        );
        let value = Tensor::new(&[n, m], out)?;
        self.push(value, Op::MatMul(a, b), &[a, b], "matmul")
    }

    /// Adds a `[m]` bias to every row of a `[.., m]` tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let m = *self.shape(x).last().unwrap_or(&0);
        if self.shape(b) != [m] {
            return Err(Error::Shape(format!(
                "add_bias {:?} + {:?}",
                self.shape(x),
                self.shape(b)
            )));
        }
        let bias = self.value(b).data().to_vec();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(m) {
            for (v, bb) in row.iter_mut().zip(&bias) {
                *v += bb;
            }
        }
        self.push(value, Op::AddBias(x, b), &[x, b], "add_bias")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// `x * scale + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(x, Op::Affine(x, scale), "affine", |v| v * scale + shift)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    /// Elementwise product with a constant array of the same shape.
    pub fn mul_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::Shape(format!(
                "mul_const {:?} vs {:?}",
                self.shape(x),
                c.shape()
            )));
        }
        let data = self.value(x).data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let value = Tensor::new(c.shape(), data)?;
        self.push(value, Op::MulConst(x, Rc::new(c.data().to_vec())), &[x], "mul_const")
    }

    /// Multiplies every element of `x` by the scalar node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Shape(format!("scale_by needs scalar, got {:?}", self.shape(s))));
        }
        let k = self.value(s).item();
        let value = self.value(x).map(|v| v * k);
        self.push(value, Op::ScaleBy(x, s), &[x, s], "scale_by")
    }

    pub fn recip(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Recip(x), "recip", |v| 1.0 / v)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Abs(x), "abs", f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square(x), "square", |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sqrt(x), "sqrt", f64::sqrt)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary(x, Op::LeakyRelu(x, slope), "leaky_relu", |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), "tanh", f64::tanh)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len().max(1) as f64;
        let value = Tensor::scalar(self.value(x).sum() / n);
        self.push(value, Op::Mean(x), &[x], "mean")
    }

    /// Sums over the last axis: `[.., n] -> [..]`.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::Shape("sum_last of scalar".into()))?;
        let data = self.value(x).data().chunks(n.max(1)).map(|c| c.iter().sum()).collect();
        let value = Tensor::new(&shape[..shape.len() - 1], data)?;
        self.push(value, Op::SumLast(x, n), &[x], "sum_last")
    }

    /// Averages over the last axis: `[.., n] -> [..]`.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&1);
        let s = self.sum_last(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        self.push(value, Op::Reshape(x), &[x], "reshape")
    }

    /// Output element `i` is input element `index[i]` (flat indexing).
    pub fn gather(&mut self, x: Var, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::Shape(format!("gather index {bad} out of {}", src.len())));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape, data)?;
        self.push(value, Op::Gather(x, index), &[x], "gather")
    }

    /// Reorders axes; `perm[i]` names the input axis that becomes output axis `i`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if perm.len() != shape.len() {
            return Err(Error::Shape(format!("permute {perm:?} of {shape:?}")));
        }
        let (index, out_shape) = permute_index(&shape, perm);
        self.gather(x, Rc::new(index), &out_shape)
    }

    /// Concatenates along the first axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &x in xs {
            let s = self.shape(x);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::Shape(format!("concat {:?} onto [_, {:?}]", s, tail)));
            }
            rows += s[0];
            data.extend_from_slice(self.value(x).data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let value = Tensor::new(&shape, data)?;
        self.push(value, Op::Concat(xs.to_vec()), xs, "concat")
    }

    /// Stride-1 2D convolution. `x: [b, cin, h, w]`, `w: [cout, cin, kh, kw]`, `b: [cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(Error::Shape(format!("conv2d x{sx:?} w{sw:?} b{sb:?}")));
        }
        let (pad_h, pad_w) = match padding {
            Padding::Same => {
                if sw[2] % 2 == 0 || sw[3] % 2 == 0 {
                    return Err(Error::Shape("same padding needs odd kernels".into()));
                }
                (sw[2] / 2, sw[3] / 2)
            }
            Padding::Valid => (0, 0),
        };
        if sx[2] + 2 * pad_h < sw[2] || sx[3] + 2 * pad_w < sw[3] {
            return Err(Error::Shape(format!("conv2d kernel {sw:?} larger than input {sx:?}")));
        }
        let geom = ConvGeometry {
            batch: sx[0],
            cin: sx[1],
            h: sx[2],
            w: sx[3],
            cout: sw[0],
            kh: sw[2],
            kw: sw[3],
            pad_h,
            pad_w,
        };
        let (oh, ow) = geom.out_hw();
        let plane = oh * ow;
        let krows = geom.cin * geom.kh * geom.kw;
        let per_item = geom.cin * geom.h * geom.w;
        let mut cols = Vec::with_capacity(geom.batch * krows * plane);
        let mut out = vec![0.0; geom.batch * geom.cout * plane];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        for n in 0..geom.batch {
            im2col(&geom, &xv[n * per_item..(n + 1) * per_item], &mut cols);
            let col = &cols[n * krows * plane..(n + 1) * krows * plane];
            let o = &mut out[n * geom.cout * plane..(n + 1) * geom.cout * plane];
            for (co, row) in o.chunks_mut(plane).enumerate() {
                row.fill(bv[co]);
            }
            gemm(
                geom.cout,
                krows,
                plane,
                wv,
                (krows as isize, 1),
                col,
                (plane as isize, 1),
                o,
                (plane as isize, 1),
                1.0,
            );
        }
        let value = Tensor::new(&[geom.batch, geom.cout, oh, ow], out)?;
        self.push(value, Op::Conv2d { x, w, b, geom, cols }, &[x, w, b], "conv2d")
    }

    /// Batch normalization over axis 1 of a `[n, c, ..]` tensor.
    ///
    /// In batch mode the statistics of the current input are used and
    /// returned so the caller can fold them into running aggregates. In
    /// frozen mode the supplied statistics are treated as constants, so each
    /// sample's output is independent of the rest of the batch.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        source: NormSource<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::Shape(format!("batch_norm needs [n, c, ..], got {shape:?}")));
        }
        let (outer, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!("batch_norm affine params must be [{c}]")));
        }
        let xv = self.value(x).data();
        let (mean, var_biased, stats) = match source {
            NormSource::Batch => {
                let count = (outer * inner) as f64;
                if outer * inner < 2 {
                    return Err(Error::Shape("batch statistics need at least two values".into()));
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for o in 0..outer {
                    for ch in 0..c {
                        let base = (o * c + ch) * inner;
                        mean[ch] += xv[base..base + inner].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for o in 0..outer {
                    for ch in 0..c {
                        let base = (o * c + ch) * inner;
                        var[ch] += xv[base..base + inner]
                            .iter()
                            .map(|v| (v - mean[ch]) * (v - mean[ch]))
                            .sum::<f64>();
                    }
                }
                let unbiased = var.iter().map(|v| v / (count - 1.0)).collect();
                var.iter_mut().for_each(|v| *v /= count);
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            NormSource::Frozen { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::Shape(format!("frozen statistics must have {c} channels")));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for ch in 0..c {
                let base = (o * c + ch) * inner;
                for i in base..base + inner {
                    let h = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = h * g[ch] + bt[ch];
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        let batch = matches!(source, NormSource::Batch);
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            layout: (outer, c, inner),
            xhat,
            inv_std,
            batch,
        };
        let v = self.push(value, op, &[x, gamma, beta], "batch_norm")?;
        Ok((v, stats))
    }

    /// Propagates d(loss)/d(node) to every reachable leaf that requires a
    /// gradient. Leaf gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 || !node.value.shape().is_empty() {
            return Err(Error::NotScalar(node.value.shape().to_vec()));
        }
        if !node.requires_grad {
            return Err(Error::Detached);
        }
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut send = |v: Var, contrib: Vec<f64>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut pending[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            };
            let val = |v: Var| nodes[v.0].value.data();
            match &node.op {
                Op::Leaf => match &mut self.grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let (n, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                    let m = nodes[b.0].value.shape()[1];
                    if nodes[a.0].requires_grad {
                        let mut ga = vec![0.0; n * k];
                        gemm(n, m, k, &g, (m as isize, 1), val(*b), (1, m as isize), &mut ga, (k as isize, 1), 0.0);
                        send(*a, ga);
                    }
                    if nodes[b.0].requires_grad {
                        let mut gb = vec![0.0; k * m];
                        gemm(k, n, m, val(*a), (1, k as isize), &g, (m as isize, 1), &mut gb, (m as isize, 1), 0.0);
                        send(*b, gb);
                    }
                }
                Op::AddBias(x, b) => {
                    let m = nodes[b.0].value.len();
                    let mut gb = vec![0.0; m];
                    for row in g.chunks(m) {
                        gb.iter_mut().zip(row).for_each(|(a, c)| *a += c);
                    }
                    send(*b, gb);
                    send(*x, g);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.iter().map(|v| -v).collect());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                    send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                }
                Op::Affine(x, s) => send(*x, g.iter().map(|v| v * s).collect()),
                Op::MulConst(x, c) => send(*x, g.iter().zip(c.iter()).map(|(g, c)| g * c).collect()),
                Op::ScaleBy(x, s) => {
                    let k = val(*s)[0];
                    let gs: f64 = g.iter().zip(val(*x)).map(|(g, x)| g * x).sum();
                    send(*s, vec![gs]);
                    send(*x, g.iter().map(|v| v * k).collect());
                }
                Op::Recip(x) => {
                    let y = node.value.data();
                    send(*x, g.iter().zip(y).map(|(g, y)| -g * y * y).collect());
                }
                Op::Abs(x) => send(*x, g.iter().zip(val(*x)).map(|(g, x)| g * sign(*x)).collect()),
                Op::Square(x) => send(*x, g.iter().zip(val(*x)).map(|(g, x)| 2.0 * g * x).collect()),
                Op::Sqrt(x) => {
                    let y = node.value.data();
                    send(*x, g.iter().zip(y).map(|(g, y)| g * 0.5 / y).collect());
                }
                Op::LeakyRelu(x, slope) => send(
                    *x,
                    g.iter().zip(val(*x)).map(|(g, x)| if *x > 0.0 { *g } else { g * slope }).collect(),
                ),
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    send(*x, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    send(*x, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
                }
                Op::Sum(x) => send(*x, vec![g[0]; nodes[x.0].value.len()]),
                Op::Mean(x) => {
                    let n = nodes[x.0].value.len();
                    send(*x, vec![g[0] / n as f64; n]);
                }
                Op::SumLast(x, n) => {
                    let mut gx = Vec::with_capacity(g.len() * n);
                    for v in &g {
                        gx.extend(std::iter::repeat(*v).take(*n));
                    }
                    send(*x, gx);
                }
                Op::Reshape(x) => send(*x, g),
                Op::Gather(x, index) => {
                    let mut gx = vec![0.0; nodes[x.0].value.len()];
                    for (gi, &src) in g.iter().zip(index.iter()) {
                        gx[src] += gi;
                    }
                    send(*x, gx);
                }
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for x in xs {
                        let n = nodes[x.0].value.len();
                        send(*x, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Conv2d { x, w, b, geom, cols } => {
                    let (oh, ow) = geom.out_hw();
                    let plane = oh * ow;
                    let krows = geom.cin * geom.kh * geom.kw;
                    let per_item = geom.cin * geom.h * geom.w;
                    if nodes[b.0].requires_grad {
                        let mut gb = vec![0.0; geom.cout];
                        for (i, chunk) in g.chunks(plane).enumerate() {
                            gb[i % geom.cout] += chunk.iter().sum::<f64>();
                        }
                        send(*b, gb);
                    }
                    if nodes[w.0].requires_grad {
                        let mut gw = vec![0.0; geom.cout * krows];
                        for n in 0..geom.batch {
                            let go = &g[n * geom.cout * plane..(n + 1) * geom.cout * plane];
                            let col = &cols[n * krows * plane..(n + 1) * krows * plane];
                            gemm(
                                geom.cout,
                                plane,
                                krows,
                                go,
                                (plane as isize, 1),
                                col,
                                (1, plane as isize),
                                &mut gw,
                                (krows as isize, 1),
                                1.0,
                            );
                        }
                        send(*w, gw);
                    }
                    if nodes[x.0].requires_grad {
                        let wv = val(*w);
                        let mut gx = vec![0.0; geom.batch * per_item];
                        let mut gcol = vec![0.0; krows * plane];
                        for n in 0..geom.batch {
                            let go = &g[n * geom.cout * plane..(n + 1) * geom.cout * plane];
                            gemm(
                                krows,
                                geom.cout,
                                plane,
                                wv,
                                (1, krows as isize),
                                go,
                                (plane as isize, 1),
                                &mut gcol,
                                (plane as isize, 1),
                                0.0,
                            );
                            col2im(geom, &gcol, &mut gx[n * per_item..(n + 1) * per_item]);
                        }
                        send(*x, gx);
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    layout: (outer, c, inner),
                    xhat,
                    inv_std,
                    batch,
                } => {
                    let (outer, c, inner) = (*outer, *c, *inner);
                    let gv = val(*gamma);
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for o in 0..outer {
                        for ch in 0..c {
                            let base = (o * c + ch) * inner;
                            for i in base..base + inner {
                                dgamma[ch] += g[i] * xhat[i];
                                dbeta[ch] += g[i];
                            }
                        }
                    }
                    if nodes[x.0].requires_grad {
                        let mut gx = vec![0.0; g.len()];
                        let count = (outer * inner) as f64;
                        for o in 0..outer {
                            for ch in 0..c {
                                let base = (o * c + ch) * inner;
                                for i in base..base + inner {
                                    let dxhat = g[i] * gv[ch];
                                    gx[i] = if *batch {
                                        // dgamma/dbeta hold sum(dy*xhat) and sum(dy) per channel
                                        inv_std[ch] / count
                                            * (count * dxhat - gv[ch] * dbeta[ch] - xhat[i] * gv[ch] * dgamma[ch])
                                    } else {
                                        dxhat * inv_std[ch]
                                    };
                                }
                            }
                        }
                        send(*x, gx);
                    }
                    send(*gamma, dgamma);
                    send(*beta, dbeta);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Flat source indices realizing an axis permutation, plus the output shape.
pub fn permute_index(shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let total: usize = shape.iter().product();
    let mut index = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    for _ in 0..total {
        let src: usize = (0..rank).map(|i| counter[i] * strides[perm[i]]).sum();
        index.push(src);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            if counter[ax] < out_shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    (index, out_shape)
}
