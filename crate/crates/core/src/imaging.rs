//! Raster types and the image-formation algebra.
//!
//! A document photograph is modelled as
//! `I(p) = M(p) ⊗ T(p) ⊗ Σ_i λ_i(p)·η_i·l_i`: material times texture times
//! the shading of every light weighted by that light's colour. All rasters
//! are linear RGB (or single-channel) `f32`, stored row-major with channels
//! interleaved.

use crate::error::{Error, Result};

/// Default guard for divisions by shading or reflectance.
pub const DIV_EPS: f32 = 1e-6;
/// Default threshold below which a pixel's chromaticity is undefined.
pub const CHROMA_EPS: f32 = 1e-4;

/// Read access shared by every raster type.
pub trait Raster {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    fn data(&self) -> &[f32];

    fn pixels(&self) -> usize {
        self.width() * self.height()
    }

    /// Value at `pixel` for channel `c`; single-channel rasters broadcast.
    #[inline]
    fn sample(&self, pixel: usize, c: usize) -> f32 {
        if self.channels() == 1 {
            self.data()[pixel]
        } else {
            self.data()[pixel * self.channels() + c]
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

fn describe(r: &impl Raster) -> String {
    format!("{}x{}x{}", r.width(), r.height(), r.channels())
}

fn same_dims(a: &impl Raster, b: &impl Raster) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(describe(a), describe(b)));
    }
    Ok(())
}

fn check_len(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    let want = width * height * channels;
    if len != want {
        return Err(Error::shape(
            format!("{width}x{height}x{channels} ({want} values)"),
            format!("{len} values"),
        ));
    }
    Ok(())
}

macro_rules! impl_raster {
    ($ty:ty, $ch:expr) => {
        impl Raster for $ty {
            fn width(&self) -> usize {
                self.width
            }
            fn height(&self) -> usize {
                self.height
            }
            fn channels(&self) -> usize {
                $ch(self)
            }
            fn data(&self) -> &[f32] {
                &self.data
            }
        }
    };
}

/// Three-channel linear-RGB image with finite, non-negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl_raster!(LinearImage, |_: &LinearImage| 3);

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(width, height, 3, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "image values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// Builds an image from a per-pixel function. Negative or non-finite
    /// outputs are clamped to zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for v in f(x, y) {
                    data.push(if v.is_finite() { v.max(0.0) } else { 0.0 });
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(x, y).map(&f))
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(
                describe(self),
                format!("crop {w}x{h} at ({x0},{y0})"),
            ));
        }
        Ok(Self::from_fn(w, h, |x, y| self.pixel(x0 + x, y0 + y)))
    }

    /// Pads to `w`×`h` by mirroring about the last row/column.
    pub fn reflect_pad(&self, w: usize, h: usize) -> Result<Self> {
        if w < self.width || h < self.height {
            return Err(Error::shape(describe(self), format!("pad target {w}x{h}")));
        }
        let src = |i: usize, n: usize| reflect_index(i, n);
        Ok(Self::from_fn(w, h, |x, y| {
            self.pixel(src(x, self.width), src(y, self.height))
        }))
    }
}

fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Strictly positive shading: one channel (achromatic λ) or three
/// (coloured `M·Σλ_i·l_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShadingMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl_raster!(ShadingMap, |s: &ShadingMap| s.channels);

impl ShadingMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidValue(format!(
                "shading must have 1 or 3 channels, got {channels}"
            )));
        }
        check_len(width, height, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidValue(format!(
                "shading values must be finite and > 0, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, 1, vec![value; width * height])
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Expands to three channels as an image (for I/O and previews).
    pub fn to_image(&self) -> LinearImage {
        LinearImage::from_fn(self.width, self.height, |x, y| {
            let p = y * self.width + x;
            [self.sample(p, 0), self.sample(p, 1), self.sample(p, 2)]
        })
    }
}

/// Per-pixel multiplicative white-balance correction.
#[derive(Debug, Clone, PartialEq)]
pub struct WBKernel {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl_raster!(WBKernel, |_: &WBKernel| 3);

impl WBKernel {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(width, height, 3, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "kernel values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn to_image(&self) -> LinearImage {
        LinearImage {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    pub fn from_image(img: &LinearImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.clone(),
        }
    }
}

/// Single-channel field with no sign constraint, e.g. per-pixel intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl_raster!(ScalarField, |_: &ScalarField| 1);

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Per-pixel validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, pixel: usize) -> bool {
        self.data[pixel]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|m| **m).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Intensity-normalised colour `c / (r + g + b)` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaticityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
    mask: Mask,
}

impl_raster!(ChromaticityMap, |_: &ChromaticityMap| 3);

impl ChromaticityMap {
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn pixel(&self, p: usize) -> [f32; 3] {
        [self.data[3 * p], self.data[3 * p + 1], self.data[3 * p + 2]]
    }
}

/// One light source: colour with channels in (0, 1] and max channel 1,
/// plus a positive intensity η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Light {
    pub color: [f32; 3],
    pub intensity: f32,
}

impl Light {
    pub fn new(color: [f32; 3], intensity: f32) -> Result<Self> {
        if color.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return Err(Error::InvalidValue(format!(
                "light colour channels must lie in (0, 1], got {color:?}"
            )));
        }
        let max = color.iter().copied().fold(0.0f32, f32::max);
        if (max - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidValue(format!(
                "light colour must have max channel 1, got {color:?}"
            )));
        }
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(Error::InvalidValue(format!(
                "light intensity must be positive, got {intensity}"
            )));
        }
        Ok(Self { color, intensity })
    }

    pub fn white(intensity: f32) -> Result<Self> {
        Self::new([1.0; 3], intensity)
    }

    /// The achromatic light with the same mean channel power.
    pub fn achromatic(&self) -> Light {
        let mean = self.color.iter().sum::<f32>() / 3.0;
        Light {
            color: [1.0; 3],
            intensity: self.intensity * mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminantSpec {
    lights: Vec<Light>,
}

impl IlluminantSpec {
    pub fn new(lights: Vec<Light>) -> Result<Self> {
        if lights.is_empty() {
            return Err(Error::InvalidValue("at least one light is required".into()));
        }
        Ok(Self { lights })
    }

    pub fn lights(&self) -> &[Light] {
        &self.lights
    }

    pub fn count(&self) -> usize {
        self.lights.len()
    }

    /// Same shading weights, every light replaced by its achromatic twin.
    pub fn achromatic(&self) -> IlluminantSpec {
        IlluminantSpec {
            lights: self.lights.iter().map(Light::achromatic).collect(),
        }
    }
}

/// Element-wise product; single-channel operands broadcast over RGB.
pub fn hadamard(a: &impl Raster, b: &impl Raster) -> Result<LinearImage> {
    same_dims(a, b)?;
    let n = a.pixels();
    let mut data = Vec::with_capacity(n * 3);
    for p in 0..n {
        for c in 0..3 {
            data.push(a.sample(p, c) * b.sample(p, c));
        }
    }
    LinearImage::new(a.width(), a.height(), data)
}

/// `num / max(den, eps)` element-wise.
pub fn divide_safe(num: &LinearImage, den: &impl Raster, eps: f32) -> Result<LinearImage> {
    if !(eps > 0.0) {
        return Err(Error::InvalidValue(format!("eps must be > 0, got {eps}")));
    }
    same_dims(num, den)?;
    let n = num.pixels();
    let mut data = Vec::with_capacity(n * 3);
    for p in 0..n {
        for c in 0..3 {
            data.push(num.sample(p, c) / den.sample(p, c).max(eps));
        }
    }
    LinearImage::new(num.width, num.height, data)
}

/// Per-pixel chromaticity. Pixels whose channel sum is `<= eps` get the
/// neutral value (1/3, 1/3, 1/3) and a false mask bit.
pub fn chromaticity(img: &LinearImage, eps: f32) -> ChromaticityMap {
    let n = img.pixels();
    let mut data = Vec::with_capacity(n * 3);
    let mut mask = Vec::with_capacity(n);
    for px in img.data.chunks_exact(3) {
        let sum = px[0] + px[1] + px[2];
        if sum > eps {
            data.extend(px.iter().map(|v| v / sum));
            mask.push(true);
        } else {
            data.extend([1.0 / 3.0; 3]);
            mask.push(false);
        }
    }
    ChromaticityMap {
        width: img.width,
        height: img.height,
        data,
        mask: Mask {
            width: img.width,
            height: img.height,
            data: mask,
        },
    }
}

/// Per-pixel channel sum.
pub fn intensity(img: &LinearImage) -> ScalarField {
    let data = img.data.chunks_exact(3).map(|px| px[0] + px[1] + px[2]).collect();
    ScalarField {
        width: img.width,
        height: img.height,
        data,
    }
}

/// `I_wb^c(p) = WB^c(p) · I^c(p)`.
pub fn apply_wb(kernel: &WBKernel, img: &LinearImage) -> Result<LinearImage> {
    same_dims(kernel, img)?;
    let data = kernel.data.iter().zip(&img.data).map(|(k, v)| k * v).collect();
    LinearImage::new(img.width, img.height, data)
}

/// Coloured shading `Σ_i λ_i(p)·η_i·l_i^c` from one single-channel shading
/// field per light.
pub fn render_shading(spec: &IlluminantSpec, lambdas: &[ShadingMap]) -> Result<ShadingMap> {
    if lambdas.len() != spec.count() {
        return Err(Error::CountMismatch {
            expected: spec.count(),
            found: lambdas.len(),
        });
    }
    let first = &lambdas[0];
    for l in lambdas {
        if l.channels != 1 {
            return Err(Error::shape("1-channel shading", describe(l)));
        }
        same_dims(first, l)?;
    }
    let n = first.pixels();
    let mut data = vec![0.0f32; n * 3];
    for (light, lambda) in spec.lights.iter().zip(lambdas) {
        for (p, out) in data.chunks_exact_mut(3).enumerate() {
            let s = lambda.data[p] * light.intensity;
            for c in 0..3 {
                out[c] += s * light.color[c];
            }
        }
    }
    ShadingMap::new(first.width, first.height, 3, data)
}

/// `a·MS1 + (1 − a)·MS2`.
pub fn mix_shadings(ms1: &ShadingMap, ms2: &ShadingMap, a: f32) -> Result<ShadingMap> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::OutOfRange {
            what: "mixing coefficient",
            value: a as f64,
            lo: 0.0,
            hi: 1.0,
        });
    }
    same_dims(ms1, ms2)?;
    if ms1.channels != ms2.channels {
        return Err(Error::shape(describe(ms1), describe(ms2)));
    }
    let data = if a == 1.0 {
        ms1.data.clone()
    } else if a == 0.0 {
        ms2.data.clone()
    } else {
        ms1.data
            .iter()
            .zip(&ms2.data)
            .map(|(x, y)| a * x + (1.0 - a) * y)
            .collect()
    };
    ShadingMap::new(ms1.width, ms1.height, ms1.channels, data)
}
