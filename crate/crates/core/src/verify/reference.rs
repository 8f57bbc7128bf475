//! Float64 re-implementation of the U-Net forward pass and both training
//! losses, written directly from their definitions without the tape. Used
//! as the numeric side of the objective gradient checks.

use crate::autodiff::Tensor;
use crate::imaging::DIV_EPS;
use crate::losses::LossWeights;
use crate::nn::{Activation, UNet, LEAKY_SLOPE};

/// `[C, H, W]` feature map.
#[derive(Debug, Clone)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn from_tensor(t: &Tensor) -> Self {
        let s = t.shape();
        Self {
            c: s[0],
            h: s[1],
            w: s[2],
            data: to64(t),
        }
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

pub fn to64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|v| *v as f64).collect()
}

/// Zero-padded same-size convolution; `w` is `[Co, Ci, k, k]` flattened.
fn conv(x: &Map, w: &[f64], b: &[f64], k: usize) -> Map {
    let co = b.len();
    let r = (k / 2) as isize;
    let mut out = vec![0.0; co * x.h * x.w];
    for o in 0..co {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut acc = b[o];
                for i in 0..x.c {
                    for dy in 0..k {
                        for dx in 0..k {
                            let sy = y as isize + dy as isize - r;
                            let sx = xx as isize + dx as isize - r;
                            if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                continue;
                            }
                            acc += w[((o * x.c + i) * k + dy) * k + dx] * x.at(i, sy as usize, sx as usize);
                        }
                    }
                }
                out[(o * x.h + y) * x.w + xx] = acc;
            }
        }
    }
    Map { c: co, h: x.h, w: x.w, data: out }
}

fn map(x: Map, f: impl Fn(f64) -> f64) -> Map {
    Map {
        data: x.data.into_iter().map(f).collect(),
        ..x
    }
}

fn pool(x: &Map) -> Map {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let s = x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y + 1, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1) + x.at(c, 2 * y + 1, 2 * xx + 1);
                data.push(0.25 * s);
            }
        }
    }
    Map { c: x.c, h, w, data }
}

fn upsample(x: &Map) -> Map {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                data.push(x.at(c, y / 2, xx / 2));
            }
        }
    }
    Map { c: x.c, h, w, data }
}

fn concat(a: &Map, b: &Map) -> Map {
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Map { c: a.c + b.c, h: a.h, w: a.w, data }
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE as f64 * v
    }
}

/// Forward pass of `net`'s architecture with parameters `params` (in the
/// network's storage order). Returns one map per head.
pub fn unet_forward(net: &UNet, params: &[Vec<f64>], input: &Map) -> Vec<Map> {
    let cfg = net.config();
    let k = cfg.kernel;
    let p = |name: &str| &params[net.params().index_of(name).expect("parameter exists")];
    let layer = |x: &Map, name: &str| conv(x, p(&format!("{name}.w")), p(&format!("{name}.b")), k);

    let mut skips = Vec::new();
    let mut x = input.clone();
    for lvl in 0..cfg.depth {
        let e = map(layer(&x, &format!("enc{lvl}")), leaky);
        x = pool(&e);
        skips.push(e);
    }
    let mid = map(layer(&x, "mid"), leaky);
    cfg.heads
        .iter()
        .map(|head| {
            let mut y = mid.clone();
            for lvl in (0..cfg.depth).rev() {
                let cat = concat(&upsample(&y), &skips[lvl]);
                y = map(layer(&cat, &format!("dec_{}{lvl}", head.name)), leaky);
            }
            let z = layer(&y, &format!("out_{}", head.name));
            match head.activation {
                Activation::Identity => z,
                Activation::Sigmoid => map(z, |v| 1.0 / (1.0 + (-v).exp())),
                Activation::Softplus => map(z, |v| if v > 30.0 { v } else { v.exp().ln_1p() }),
            }
        })
        .collect()
}

/// Mean `|a − b|` over elements where `mask` is set (all when `None`).
pub fn l1(a: &[f64], b: &[f64], mask: Option<&[f64]>) -> f64 {
    match mask {
        None => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64,
        Some(m) => {
            let count: f64 = m.iter().sum();
            if count == 0.0 {
                return 0.0;
            }
            a.iter().zip(b).zip(m).map(|((x, y), k)| (x - y).abs() * k).sum::<f64>() / count
        }
    }
}

/// Per-pixel channel sum of a 3-channel CHW buffer.
fn channel_sum(x: &[f64]) -> Vec<f64> {
    let hw = x.len() / 3;
    (0..hw).map(|p| x[p] + x[hw + p] + x[2 * hw + p]).collect()
}

fn chroma(x: &[f64]) -> Vec<f64> {
    let hw = x.len() / 3;
    let s: Vec<f64> = channel_sum(x).into_iter().map(|v| v.max(DIV_EPS as f64)).collect();
    x.iter().enumerate().map(|(i, v)| v / s[i % hw]).collect()
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// White-balance loss for a predicted kernel.
pub fn wbn_loss(image: &[f64], k_hat: &[f64], k_gt: &[f64], wb_gt: &[f64], mask: &[f64], w: &LossWeights) -> f64 {
    let iwb = mul(k_hat, image);
    l1(k_hat, k_gt, Some(mask))
        + w.alpha1 as f64 * l1(&chroma(&iwb), &chroma(wb_gt), Some(mask))
        + w.alpha2 as f64 * l1(&channel_sum(&iwb), &channel_sum(wb_gt), None)
}

/// Separation loss for predicted material and shading on an `n × n` grid.
pub fn smt_loss(iwb: &[f64], texture: &[f64], m_hat: &[f64], lp: &[f64], n: usize, w: &LossWeights) -> f64 {
    let hw = n * n;
    let r = mul(m_hat, texture);
    let le: Vec<f64> = channel_sum(iwb)
        .iter()
        .zip(channel_sum(&r))
        .map(|(a, b)| a / b.max(DIV_EPS as f64))
        .collect();
    let recon: Vec<f64> = r.iter().enumerate().map(|(i, v)| v * lp[i % hw]).collect();
    let mut lap = 0.0;
    for y in 1..n - 1 {
        for x in 1..n - 1 {
            let i = y * n + x;
            lap += (lp[i - n] + lp[i + n] + lp[i - 1] + lp[i + 1] - 4.0 * lp[i]).abs();
        }
    }
    lap /= ((n - 2) * (n - 2)) as f64;
    let mut grad = 0.0;
    for c in 0..3 {
        let m = &m_hat[c * hw..(c + 1) * hw];
        for y in 0..n {
            for x in 0..n {
                if x + 1 < n {
                    grad += (m[y * n + x + 1] - m[y * n + x]).abs();
                }
                if y + 1 < n {
                    grad += (m[(y + 1) * n + x] - m[y * n + x]).abs();
                }
            }
        }
    }
    grad /= (3 * 2 * n * (n - 1)) as f64;
    l1(&chroma(iwb), &chroma(&r), None)
        + w.beta1 as f64 * l1(lp, &le, None)
        + w.beta2 as f64 * l1(&recon, iwb, None)
        + w.beta3 as f64 * lap
        + w.beta4 as f64 * grad
}
