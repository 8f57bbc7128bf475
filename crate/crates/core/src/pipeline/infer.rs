//! Two-stage inference `I → Î_wb → (M̂, λ̂_p, λ̂_e, R̂)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{apply_wb, divide_safe, hadamard, intensity, LinearImage, Raster, ShadingMap, WBKernel, DIV_EPS};
use crate::io::{linear_to_srgb, write_pfm, write_png};
use crate::nn::{Checkpoint, SmtNet, UNet, WbNet};

pub trait WhiteBalancer {
    fn kernel(&self, image: &LinearImage) -> Result<WBKernel>;
}

pub trait Separator {
    /// Returns `(material, single-channel shading)`.
    fn separate(&self, wb_image: &LinearImage) -> Result<(LinearImage, ShadingMap)>;
}

/// Runs `net` on `image` after reflect-padding it to the network's size
/// multiple, then crops every output back.
fn predict_padded(net: &UNet, image: &LinearImage) -> Result<Vec<Tensor>> {
    let m = net.config().size_multiple();
    let (w, h) = (image.width(), image.height());
    let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
    let input = if (pw, ph) == (w, h) { image.clone() } else { image.reflect_pad(pw, ph)? };
    let outs = net.predict(&Tensor::from_raster(&input))?;
    if (pw, ph) == (w, h) {
        return Ok(outs);
    }
    outs.into_iter().map(|t| crop_chw(&t, w, h)).collect()
}

fn crop_chw(t: &Tensor, w: usize, h: usize) -> Result<Tensor> {
    let (c, _, tw) = t.chw()?;
    let mut data = Vec::with_capacity(c * w * h);
    for ch in 0..c {
        let plane = &t.data()[ch * t.shape()[1] * tw..];
        for y in 0..h {
            data.extend_from_slice(&plane[y * tw..y * tw + w]);
        }
    }
    Tensor::new(vec![c, h, w], data)
}

impl WhiteBalancer for WbNet {
    fn kernel(&self, image: &LinearImage) -> Result<WBKernel> {
        predict_padded(&self.0, image)?[0].to_kernel()
    }
}

impl Separator for SmtNet {
    fn separate(&self, wb_image: &LinearImage) -> Result<(LinearImage, ShadingMap)> {
        let outs = predict_padded(&self.0, wb_image)?;
        Ok((outs[0].to_image()?, outs[1].to_shading()?))
    }
}

/// Returns a known kernel, bypassing the network.
pub struct OracleWhiteBalancer(pub WBKernel);

impl WhiteBalancer for OracleWhiteBalancer {
    fn kernel(&self, image: &LinearImage) -> Result<WBKernel> {
        if (image.width(), image.height()) != (self.0.width(), self.0.height()) {
            return Err(Error::shape(
                format!("{}x{}", self.0.width(), self.0.height()),
                format!("{}x{}", image.width(), image.height()),
            ));
        }
        Ok(self.0.clone())
    }
}

/// Returns known material and shading, bypassing the network.
pub struct OracleSeparator {
    pub material: LinearImage,
    pub shading: ShadingMap,
}

impl Separator for OracleSeparator {
    fn separate(&self, wb_image: &LinearImage) -> Result<(LinearImage, ShadingMap)> {
        if (wb_image.width(), wb_image.height()) != (self.material.width(), self.material.height()) {
            return Err(Error::shape(
                format!("{}x{}", self.material.width(), self.material.height()),
                format!("{}x{}", wb_image.width(), wb_image.height()),
            ));
        }
        Ok((self.material.clone(), self.shading.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub wb_image: LinearImage,
    pub wb_kernel: WBKernel,
    pub material: LinearImage,
    pub shading_predicted: ShadingMap,
    /// `Σ_c Î_wb / Σ_c R̂`; only available when the texture is known.
    pub shading_estimated: Option<ShadingMap>,
    pub reflectance: LinearImage,
}

fn channel_sum(img: &LinearImage) -> Result<ShadingMap> {
    let s = intensity(img);
    ShadingMap::new(s.width(), s.height(), 1, s.data().iter().map(|v| v.max(DIV_EPS)).collect())
}

/// Full decomposition. With a texture, `R̂ = M̂ ⊗ T`; without one,
/// `R̂ = Î_wb ⊘ max(λ̂_p, ε)`.
pub fn decompose(
    image: &LinearImage,
    wb: &dyn WhiteBalancer,
    separator: &dyn Separator,
    texture: Option<&LinearImage>,
) -> Result<Decomposition> {
    let wb_kernel = wb.kernel(image)?;
    let wb_image = apply_wb(&wb_kernel, image)?;
    let (material, shading_predicted) = separator.separate(&wb_image)?;
    let (reflectance, shading_estimated) = match texture {
        Some(t) => {
            let r = hadamard(&material, t)?;
            let num = intensity(&wb_image);
            let den = channel_sum(&r)?;
            let est = num.data().iter().zip(den.data()).map(|(n, d)| (n / d).max(DIV_EPS)).collect();
            let est = ShadingMap::new(r.width(), r.height(), 1, est)?;
            (r, Some(est))
        }
        None => (divide_safe(&wb_image, &shading_predicted, DIV_EPS)?, None),
    };
    Ok(Decomposition {
        wb_image,
        wb_kernel,
        material,
        shading_predicted,
        shading_estimated,
        reflectance,
    })
}

impl Decomposition {
    /// Undoes the pipeline: `(M̂ ⊗ T ⊗ λ̂_p) ⊘ WB̂`, with `R̂` standing in for
    /// `M̂ ⊗ T`.
    pub fn reconstruct_input(&self) -> Result<LinearImage> {
        let wb = hadamard(&self.reflectance, &self.shading_predicted)?;
        divide_safe(&wb, &self.wb_kernel, DIV_EPS)
    }

    /// Side-by-side sRGB panels: input | Î_wb | M̂ | λ̂_p | R̂. Each panel is
    /// divided by `exposure` before encoding.
    pub fn preview(&self, input: &LinearImage, exposure: f32) -> Result<LinearImage> {
        let panels = [
            input.clone(),
            self.wb_image.clone(),
            self.material.clone(),
            self.shading_predicted.to_image(),
            self.reflectance.clone(),
        ];
        let (w, h) = (input.width(), input.height());
        let k = panels.len();
        let gap = 2;
        let total_w = k * w + (k - 1) * gap;
        Ok(LinearImage::from_fn(total_w, h, |x, y| {
            let (i, xi) = (x / (w + gap), x % (w + gap));
            if xi >= w {
                return [1.0; 3];
            }
            panels[i].pixel(xi, y).map(|v| (v / exposure).clamp(0.0, 1.0))
        }))
    }

    /// Writes every field as PFM plus `index.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_pfm(&dir.join("wb_image.pfm"), &self.wb_image)?;
        write_pfm(&dir.join("wb_kernel.pfm"), &self.wb_kernel)?;
        write_pfm(&dir.join("material.pfm"), &self.material)?;
        write_pfm(&dir.join("shading_predicted.pfm"), &self.shading_predicted)?;
        write_pfm(&dir.join("reflectance.pfm"), &self.reflectance)?;
        if let Some(s) = &self.shading_estimated {
            write_pfm(&dir.join("shading_estimated.pfm"), s)?;
        }
        let index = DecompositionIndex {
            width: self.wb_image.width(),
            height: self.wb_image.height(),
            wb_image: "wb_image.pfm".into(),
            wb_kernel: "wb_kernel.pfm".into(),
            material: "material.pfm".into(),
            shading_predicted: "shading_predicted.pfm".into(),
            shading_estimated: self.shading_estimated.as_ref().map(|_| "shading_estimated.pfm".into()),
            reflectance: "reflectance.pfm".into(),
        };
        fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionIndex {
    pub width: usize,
    pub height: usize,
    pub wb_image: String,
    pub wb_kernel: String,
    pub material: String,
    pub shading_predicted: String,
    pub shading_estimated: Option<String>,
    pub reflectance: String,
}

pub fn load_wbnet(path: &Path) -> Result<WbNet> {
    WbNet::from_unet(Checkpoint::load(path)?.network()?)
}

pub fn load_smtnet(path: &Path) -> Result<SmtNet> {
    SmtNet::from_unet(Checkpoint::load(path)?.network()?)
}

/// Loads both checkpoints and decomposes `image`.
pub fn infer(image: &LinearImage, wb_ckpt: &Path, smt_ckpt: &Path, texture: Option<&LinearImage>) -> Result<Decomposition> {
    let wb = load_wbnet(wb_ckpt)?;
    let smt = load_smtnet(smt_ckpt)?;
    decompose(image, &wb, &smt, texture)
}

/// sRGB PNG of a preview strip.
pub fn write_preview(path: &Path, strip: &LinearImage) -> Result<()> {
    debug_assert!(strip.data().iter().all(|v| linear_to_srgb(*v).is_finite()));
    write_png(path, strip, true, false)
}
