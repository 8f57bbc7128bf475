//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates exact adjoints into every node that (transitively) depends
//! on a parameter leaf. Constants never receive gradients.
//!
//! One tape records one forward pass; tapes are cheap and are not shared
//! between threads.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        /// im2col matrix of `x`, kept for the backward pass.
        col: Vec<f32>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Var, Var),
    LeakyRelu(Var, f32),
    Sigmoid(Var),
    Softplus(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f32),
    AddScalar(Var),
    Abs(Var),
    ClampMin(Var, f32),
    ChannelSum(Var),
    Broadcast(Var),
    Sum(Var),
    Mean(Var),
    DiffX(Var),
    DiffY(Var),
    Laplacian(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    tag: Option<String>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when `v` received none.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::shape(format!("{op}: {a:?}"), format!("{b:?}"))
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `c = alpha·op(a)·op(b) + beta·c` for row-major strided views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (isize, isize),
    b: &[f32],
    b_strides: (isize, isize),
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above guarantee every strided index the kernel
    // touches lies inside the borrowed slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = k / 2;
    let hw = h * w;
    let mut col = vec![0.0f32; c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dx = kx as isize - pad as isize;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], c: usize, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = k / 2;
    let hw = h * w;
    let mut x = vec![0.0f32; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dx = kx as isize - pad as isize;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + sx0..][..x1 - x0];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Tags of every tagged leaf on the tape, in creation order.
    pub fn leaf_tags(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|n| n.tag.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteDetected(format!("forward {what}")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            tag: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "parameter")
    }

    /// Leaf treated as data: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Constant leaf carrying a provenance tag, for auditing which data
    /// entered a graph.
    pub fn tagged_constant(&mut self, value: Tensor, tag: &str) -> Result<Var> {
        let v = self.constant(value)?;
        self.nodes[v.0].tag = Some(tag.to_string());
        Ok(v)
    }

    fn unary(&mut self, x: Var, what: &str, op: Op, f: impl Fn(f32) -> f32) -> Result<Var> {
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|v| f(*v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        self.push(value, op, rg, what)
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, op: Op, f: impl Fn(f32, f32) -> f32) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(shape_err(what, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(value, op, rg, what)
    }

    /// Same-padded square convolution, stride 1. `w` is `[Co, Ci, k, k]`
    /// with odd `k`; `b` is `[Co]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (c, h, wd) = self.value(x).chw()?;
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        let (co, k) = match ws[..] {
            [co, ci, k, k2] if ci == c && k == k2 && k % 2 == 1 => (co, k),
            _ => return Err(shape_err("conv2d weight", &[0, c, 3, 3], &ws)),
        };
        if bs != [co] {
            return Err(shape_err("conv2d bias", &[co], &bs));
        }
        let col = im2col(self.value(x).data(), c, h, wd, k);
        let hw = h * wd;
        let kk = c * k * k;
        let mut out = vec![0.0f32; co * hw];
        for (o, bias) in self.value(b).data().iter().enumerate() {
            out[o * hw..(o + 1) * hw].fill(*bias);
        }
        gemm(co, kk, hw, self.value(w).data(), (kk as isize, 1), &col, (hw as isize, 1), &mut out, 1.0);
        let value = Tensor::new(vec![co, h, wd], out)?;
        let rg = self.rg(&[x, w, b]);
        self.push(value, Op::Conv2d { x, w, b, col }, rg, "conv2d")
    }

    /// 2×2 average pooling; height and width must be even.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("even spatial size", format!("{h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = vec![0.0f32; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let base = ch * h * w + 2 * y * w + 2 * xx;
                    out[(ch * oh + y) * ow + xx] =
                        0.25 * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::AvgPool2(x), rg, "avg_pool2")
    }

    /// 2× nearest-neighbour upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let (oh, ow) = (h * 2, w * 2);
        let src = self.value(x).data();
        let mut out = vec![0.0f32; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = src[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::Upsample2(x), rg, "upsample2")
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.value(a).chw()?;
        let (cb, hb, wb) = self.value(b).chw()?;
        if (ha, wa) != (hb, wb) {
            return Err(shape_err("concat", self.shape(a), self.shape(b)));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::new(vec![ca + cb, ha, wa], data)?;
        let rg = self.rg(&[a, b]);
        self.push(value, Op::Concat(a, b), rg, "concat")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Result<Var> {
        self.unary(x, "leaky_relu", Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "sigmoid", Op::Sigmoid(x), sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "softplus", Op::Softplus(x), softplus)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, x: Var, k: f32) -> Result<Var> {
        self.unary(x, "scale", Op::Scale(x, k), |v| v * k)
    }

    pub fn add_scalar(&mut self, x: Var, k: f32) -> Result<Var> {
        self.unary(x, "add_scalar", Op::AddScalar(x), |v| v + k)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "abs", Op::Abs(x), f32::abs)
    }

    /// `max(x, min)`; the gradient passes only where `x > min`.
    pub fn clamp_min(&mut self, x: Var, min: f32) -> Result<Var> {
        self.unary(x, "clamp_min", Op::ClampMin(x, min), |v| v.max(min))
    }

    /// Sum over channels: `[C, H, W] → [1, H, W]`.
    pub fn channel_sum(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let src = self.value(x).data();
        let hw = h * w;
        let mut out = vec![0.0f32; hw];
        for ch in 0..c {
            for (o, v) in out.iter_mut().zip(&src[ch * hw..(ch + 1) * hw]) {
                *o += v;
            }
        }
        let value = Tensor::new(vec![1, h, w], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::ChannelSum(x), rg, "channel_sum")
    }

    /// Repeats a single channel: `[1, H, W] → [channels, H, W]`.
    pub fn broadcast(&mut self, x: Var, channels: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if c != 1 {
            return Err(shape_err("broadcast", &[1, h, w], self.shape(x)));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(channels * h * w);
        for _ in 0..channels {
            data.extend_from_slice(src);
        }
        let value = Tensor::new(vec![channels, h, w], data)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::Broadcast(x), rg, "broadcast")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|v| *v as f64).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s as f32), Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::TooSmall("mean of an empty tensor".into()));
        }
        let s: f64 = t.data().iter().map(|v| *v as f64).sum();
        let n = t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar((s / n) as f32), Op::Mean(x), rg, "mean")
    }

    /// Forward difference along width: `[C, H, W] → [C, H, W-1]`.
    pub fn diff_x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if w < 2 {
            return Err(Error::TooSmall(format!("diff_x on width {w}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * h * (w - 1));
        for row in src.chunks_exact(w) {
            out.extend(row.windows(2).map(|p| p[1] - p[0]));
        }
        let value = Tensor::new(vec![c, h, w - 1], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::DiffX(x), rg, "diff_x")
    }

    /// Forward difference along height: `[C, H, W] → [C, H-1, W]`.
    pub fn diff_y(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h < 2 {
            return Err(Error::TooSmall(format!("diff_y on height {h}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * (h - 1) * w);
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for y in 0..h - 1 {
                out.extend((0..w).map(|xx| plane[(y + 1) * w + xx] - plane[y * w + xx]));
            }
        }
        let value = Tensor::new(vec![c, h - 1, w], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::DiffY(x), rg, "diff_y")
    }

    /// 5-point Laplacian on interior pixels: `[C, H, W] → [C, H-2, W-2]`.
    pub fn laplacian(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h < 3 || w < 3 {
            return Err(Error::TooSmall(format!("laplacian on {h}x{w}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * (h - 2) * (w - 2));
        for ch in 0..c {
            let p = &src[ch * h * w..(ch + 1) * h * w];
            for y in 1..h - 1 {
                for xx in 1..w - 1 {
                    let i = y * w + xx;
                    out.push(p[i - w] + p[i + w] + p[i - 1] + p[i + 1] - 4.0 * p[i]);
                }
            }
        }
        let value = Tensor::new(vec![c, h - 2, w - 2], out)?;
        let rg = self.rg(&[x]);
        self.push(value, Op::Laplacian(x), rg, "laplacian")
    }

    /// Reverse pass from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::shape("scalar output", format!("{:?}", self.shape(output))));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteDetected(format!("gradient of node {i}")));
            }
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|d| Tensor::new(self.nodes[i].value.shape().to_vec(), d))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f32])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, col } => {
                let (c, h, wd) = nodes[x.0].value.chw().expect("conv input is rank 3");
                let ws = nodes[w.0].value.shape();
                let (co, k) = (ws[0], ws[2]);
                let hw = h * wd;
                let kk = c * k * k;
                acc(*b, &mut |gb| {
                    for (o, slot) in gb.iter_mut().enumerate() {
                        *slot += g[o * hw..(o + 1) * hw].iter().map(|v| *v as f64).sum::<f64>() as f32;
                    }
                });
                acc(*w, &mut |gw| {
                    gemm(co, hw, kk, g, (hw as isize, 1), col, (1, hw as isize), gw, 1.0);
                });
                if wants(*x) {
                    let mut dcol = vec![0.0f32; kk * hw];
                    gemm(kk, co, hw, val(*w), (1, kk as isize), g, (hw as isize, 1), &mut dcol, 0.0);
                    let dx = col2im(&dcol, c, h, wd, k);
                    acc(*x, &mut |gx| {
                        for (a, d) in gx.iter_mut().zip(&dx) {
                            *a += d;
                        }
                    });
                }
            }
            Op::AvgPool2(x) => {
                let (c, h, w) = nodes[x.0].value.chw().expect("rank 3");
                let (oh, ow) = (h / 2, w / 2);
                acc(*x, &mut |gx| {
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                gx[(ch * h + y) * w + xx] += 0.25 * g[(ch * oh + y / 2) * ow + xx / 2];
                            }
                        }
                    }
                });
            }
            Op::Upsample2(x) => {
                let (c, h, w) = nodes[x.0].value.chw().expect("rank 3");
                let (oh, ow) = (h * 2, w * 2);
                acc(*x, &mut |gx| {
                    for ch in 0..c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * oh + y) * ow + xx];
                            }
                        }
                    }
                });
            }
            Op::Concat(a, b) => {
                let na = nodes[a.0].value.len();
                acc(*a, &mut |ga| add_into(ga, &g[..na]));
                acc(*b, &mut |gb| add_into(gb, &g[na..]));
            }
            Op::LeakyRelu(x, slope) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        *a += if *xi > 0.0 { *gi } else { slope * gi };
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for ((a, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                        *a += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Softplus(x) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        *a += gi * sigmoid(*xi);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for (x, gi) in gb.iter_mut().zip(g) {
                        *x -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((x, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *x += gi * bi;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((x, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((x, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *x += gi / bi;
                    }
                });
                acc(*b, &mut |gb| {
                    for (((x, gi), ai), bi) in gb.iter_mut().zip(g).zip(av).zip(bv) {
                        *x -= gi * ai / (bi * bi);
                    }
                });
            }
            Op::Scale(x, k) => {
                acc(*x, &mut |gx| {
                    for (a, gi) in gx.iter_mut().zip(g) {
                        *a += k * gi;
                    }
                });
            }
            Op::AddScalar(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::Abs(x) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *a += gi;
                        } else if *xi < 0.0 {
                            *a -= gi;
                        }
                    }
                });
            }
            Op::ClampMin(x, min) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for ((a, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        if *xi > *min {
                            *a += gi;
                        }
                    }
                });
            }
            Op::ChannelSum(x) => {
                let hw = g.len();
                acc(*x, &mut |gx| {
                    for plane in gx.chunks_exact_mut(hw) {
                        add_into(plane, g);
                    }
                });
            }
            Op::Broadcast(x) => {
                let hw = nodes[x.0].value.len();
                acc(*x, &mut |gx| {
                    for plane in g.chunks_exact(hw) {
                        add_into(gx, plane);
                    }
                });
            }
            Op::Sum(x) => {
                let g0 = g[0];
                acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g0));
            }
            Op::Mean(x) => {
                let g0 = g[0] / nodes[x.0].value.len() as f32;
                acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g0));
            }
            Op::DiffX(x) => {
                let w = nodes[x.0].value.shape()[2];
                acc(*x, &mut |gx| {
                    for (row, grow) in gx.chunks_exact_mut(w).zip(g.chunks_exact(w - 1)) {
                        for (i, gi) in grow.iter().enumerate() {
                            row[i + 1] += gi;
                            row[i] -= gi;
                        }
                    }
                });
            }
            Op::DiffY(x) => {
                let (c, h, w) = nodes[x.0].value.chw().expect("rank 3");
                acc(*x, &mut |gx| {
                    for ch in 0..c {
                        for y in 0..h - 1 {
                            for xx in 0..w {
                                let gi = g[(ch * (h - 1) + y) * w + xx];
                                gx[(ch * h + y + 1) * w + xx] += gi;
                                gx[(ch * h + y) * w + xx] -= gi;
                            }
                        }
                    }
                });
            }
            Op::Laplacian(x) => {
                let (c, h, w) = nodes[x.0].value.chw().expect("rank 3");
                acc(*x, &mut |gx| {
                    for ch in 0..c {
                        let p = &mut gx[ch * h * w..(ch + 1) * h * w];
                        for y in 1..h - 1 {
                            for xx in 1..w - 1 {
                                let gi = g[(ch * (h - 2) + y - 1) * (w - 2) + xx - 1];
                                let i = y * w + xx;
                                p[i - w] += gi;
                                p[i + w] += gi;
                                p[i - 1] += gi;
                                p[i + 1] += gi;
                                p[i] -= 4.0 * gi;
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
