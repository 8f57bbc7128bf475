use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Mask, Raster, ShadingMap, WBKernel};

/// Dense row-major `f32` array. Image tensors are laid out channel-first
/// (`[C, H, W]`); scalars have an empty shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{shape:?} ({n} values)"), format!("{} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape("[C, H, W]", format!("{:?}", self.shape))),
        }
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Channel-first tensor from any interleaved raster.
    pub fn from_raster(r: &impl Raster) -> Self {
        let (w, h, c) = (r.width(), r.height(), r.channels());
        let src = r.data();
        let mut data = vec![0.0; c * h * w];
        for p in 0..w * h {
            for ch in 0..c {
                data[ch * w * h + p] = src[p * c + ch];
            }
        }
        Self {
            shape: vec![c, h, w],
            data,
        }
    }

    /// `[channels, H, W]` tensor of 0/1 from a mask.
    pub fn from_mask(mask: &Mask, channels: usize) -> Self {
        let plane: Vec<f32> = mask.data().iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
        let mut data = Vec::with_capacity(plane.len() * channels);
        for _ in 0..channels {
            data.extend_from_slice(&plane);
        }
        Self {
            shape: vec![channels, mask.height(), mask.width()],
            data,
        }
    }

    fn interleaved(&self, want_channels: usize) -> Result<(usize, usize, Vec<f32>)> {
        let (c, h, w) = self.chw()?;
        if c != want_channels {
            return Err(Error::shape(format!("{want_channels} channels"), format!("{:?}", self.shape)));
        }
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                out[p * c + ch] = self.data[ch * h * w + p];
            }
        }
        Ok((w, h, out))
    }

    pub fn to_image(&self) -> Result<LinearImage> {
        let (w, h, data) = self.interleaved(3)?;
        LinearImage::new(w, h, data)
    }

    pub fn to_kernel(&self) -> Result<WBKernel> {
        let (w, h, data) = self.interleaved(3)?;
        WBKernel::new(w, h, data)
    }

    pub fn to_shading(&self) -> Result<ShadingMap> {
        let (c, _, _) = self.chw()?;
        let (w, h, data) = self.interleaved(c)?;
        ShadingMap::new(w, h, c, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_layout_round_trip() {
        let img = LinearImage::from_fn(3, 2, |x, y| [x as f32, y as f32, (x + y) as f32]);
        let t = Tensor::from_raster(&img);
        assert_eq!(t.shape(), &[3, 2, 3]);
        // channel 1 holds the y coordinate
        assert_eq!(&t.data()[6..12], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.to_image().unwrap(), img);
    }

    #[test]
    fn shape_checked() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::scalar(1.0).chw().is_err());
    }
}
