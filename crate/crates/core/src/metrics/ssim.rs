//! Multi-scale structural similarity on luminance.
//!
//! 11×11 Gaussian window (σ = 1.5) applied without padding, K1 = 0.01,
//! K2 = 0.03, dynamic range 1, 2×2 average pooling between scales. The
//! contrast-structure term of every scale but the last and the full SSIM of
//! the last scale are clamped at zero, then combined as a weighted
//! geometric mean.

use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Raster};

pub const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Single-channel f64 image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!("{} values", width * height), data.len()));
        }
        Ok(Self { width, height, data })
    }

    /// Rec. 709 luminance of a linear image.
    pub fn luminance(img: &LinearImage) -> Self {
        let data = img
            .data()
            .chunks_exact(3)
            .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            data,
        }
    }

    fn pool2(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.width + 2 * x;
                data.push(0.25 * (self.data[i] + self.data[i + 1] + self.data[i + self.width] + self.data[i + self.width + 1]));
            }
        }
        Self { width: w, height: h, data }
    }
}

fn gaussian() -> [f64; WINDOW] {
    let half = (WINDOW - 1) as f64 / 2.0;
    let mut g: [f64; WINDOW] = std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SIGMA * SIGMA)).exp());
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(p: &Plane, g: &[f64; WINDOW]) -> Plane {
    let (ow, oh) = (p.width + 1 - WINDOW, p.height + 1 - WINDOW);
    let mut rows = vec![0.0; ow * p.height];
    for y in 0..p.height {
        let row = &p.data[y * p.width..(y + 1) * p.width];
        for x in 0..ow {
            rows[y * ow + x] = g.iter().zip(&row[x..x + WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    Plane {
        width: ow,
        height: oh,
        data: out,
    }
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_cs(a: &Plane, b: &Plane) -> (f64, f64) {
    let g = gaussian();
    let prod = |f: fn(f64, f64) -> f64| Plane {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
    };
    let mu_a = filter_valid(a, &g);
    let mu_b = filter_valid(b, &g);
    let aa = filter_valid(&prod(|x, _| x * x), &g);
    let bb = filter_valid(&prod(|_, y| y * y), &g);
    let ab = filter_valid(&prod(|x, y| x * y), &g);
    let n = mu_a.data.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = aa.data[i] - ma * ma;
        let vb = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        let c = (2.0 * cov + C2) / (va + vb + C2);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

/// Smallest side length accepted for `levels` scales.
pub fn min_size(levels: usize) -> usize {
    WINDOW << (levels.max(1) - 1)
}

/// MS-SSIM of two planes with `levels` scales (1–5). Below five scales the
/// leading weights are renormalised to sum to 1; one level is plain SSIM
/// and may be negative.
pub fn ms_ssim_plane(a: &Plane, b: &Plane, levels: usize) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(format!("{}x{}", a.width, a.height), format!("{}x{}", b.width, b.height)));
    }
    if !(1..=WEIGHTS.len()).contains(&levels) {
        return Err(Error::InvalidValue(format!("levels must be 1..=5, got {levels}")));
    }
    let need = min_size(levels);
    if a.width.min(a.height) < need {
        return Err(Error::TooSmall(format!(
            "{levels}-level MS-SSIM needs sides >= {need}, got {}x{}",
            a.width, a.height
        )));
    }
    if levels == 1 {
        return Ok(ssim_cs(a, b).0);
    }
    // the published weights sum to 1.0001 and are used as-is at full depth
    let total: f64 = if levels == WEIGHTS.len() { 1.0 } else { WEIGHTS[..levels].iter().sum() };
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut log_sum = 0.0;
    for (k, w) in WEIGHTS[..levels].iter().enumerate() {
        if k > 0 {
            a = a.pool2();
            b = b.pool2();
        }
        let (ssim, cs) = ssim_cs(&a, &b);
        let term = if k + 1 == levels { ssim } else { cs }.max(0.0);
        if term == 0.0 {
            return Ok(0.0);
        }
        log_sum += w / total * term.ln();
    }
    Ok(log_sum.exp())
}

pub fn ms_ssim(a: &LinearImage, b: &LinearImage, levels: usize) -> Result<f64> {
    ms_ssim_plane(&Plane::luminance(a), &Plane::luminance(b), levels)
}

/// Uses as many scales (up to 5) as the image size allows.
pub fn ms_ssim_auto(a: &LinearImage, b: &LinearImage) -> Result<f64> {
    let side = a.width().min(a.height());
    let levels = (1..=WEIGHTS.len()).rev().find(|l| side >= min_size(*l)).unwrap_or(1);
    ms_ssim(a, b, levels)
}
