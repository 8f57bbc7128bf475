//! Loading manifest samples into network-ready tensors.
//!
//! Training-side loaders read only what the losses are allowed to see.
//! Material and shading ground truth live in a separate loader used for
//! validation diagnostics.

use rayon::prelude::*;

use super::infer::WhiteBalancer;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::imaging::{apply_wb, Mask};
use crate::io::{read_image_pfm, read_mask_png, read_pfm, read_shading_pfm};
use crate::synth::{Manifest, ManifestEntry, Split};

#[derive(Debug, Clone)]
pub struct WbExample {
    pub id: String,
    pub image: Tensor,
    pub kernel: Tensor,
    pub wb: Tensor,
    /// 0/1 mask broadcast over three channels.
    pub mask: Tensor,
    /// Light colour for single-light samples.
    pub illuminant: Option<[f32; 3]>,
}

#[derive(Debug, Clone)]
pub struct SmtExample {
    pub id: String,
    pub iwb: Tensor,
    pub texture: Tensor,
}

/// Withheld ground truth, for diagnostics only.
#[derive(Debug, Clone)]
pub struct SmtReference {
    pub material: Tensor,
    pub shading: Tensor,
}

fn entries(manifest: &Manifest, split: Split) -> Vec<&ManifestEntry> {
    manifest.split(split).collect()
}

fn load_wb_entry(manifest: &Manifest, e: &ManifestEntry) -> Result<WbExample> {
    let image = read_image_pfm(&manifest.resolve(&e.input))?;
    let kernel = read_pfm(&manifest.resolve(&e.kernel_gt))?;
    let wb = read_image_pfm(&manifest.resolve(&e.wb_gt))?;
    let mask: Mask = read_mask_png(&manifest.resolve(&e.mask))?;
    let kernel = crate::imaging::WBKernel::new(kernel.width, kernel.height, kernel.data)?;
    Ok(WbExample {
        id: e.id.clone(),
        image: Tensor::from_raster(&image),
        kernel: Tensor::from_raster(&kernel),
        wb: Tensor::from_raster(&wb),
        mask: Tensor::from_mask(&mask, 3),
        illuminant: match e.lights.as_slice() {
            [one] => Some(one.rgb),
            _ => None,
        },
    })
}

pub fn load_wb(manifest: &Manifest, split: Split) -> Result<Vec<WbExample>> {
    entries(manifest, split).par_iter().map(|e| load_wb_entry(manifest, e)).collect()
}

/// Where the separator's white-balanced input comes from.
pub enum WbInput<'a> {
    GroundTruth,
    Predicted(&'a (dyn WhiteBalancer + Sync)),
}

fn load_smt_entry(manifest: &Manifest, e: &ManifestEntry, source: &WbInput) -> Result<SmtExample> {
    let iwb = match source {
        WbInput::GroundTruth => read_image_pfm(&manifest.resolve(&e.wb_gt))?,
        WbInput::Predicted(wb) => {
            let image = read_image_pfm(&manifest.resolve(&e.input))?;
            apply_wb(&wb.kernel(&image)?, &image)?
        }
    };
    let texture = read_image_pfm(&manifest.resolve(&e.texture))?;
    Ok(SmtExample {
        id: e.id.clone(),
        iwb: Tensor::from_raster(&iwb),
        texture: Tensor::from_raster(&texture),
    })
}

pub fn load_smt(manifest: &Manifest, split: Split, source: &WbInput) -> Result<Vec<SmtExample>> {
    entries(manifest, split)
        .par_iter()
        .map(|e| load_smt_entry(manifest, e, source))
        .collect()
}

pub fn load_smt_reference(manifest: &Manifest, split: Split) -> Result<Vec<SmtReference>> {
    entries(manifest, split)
        .par_iter()
        .map(|e| {
            Ok(SmtReference {
                material: Tensor::from_raster(&read_image_pfm(&manifest.resolve(&e.material_gt))?),
                shading: Tensor::from_raster(&read_shading_pfm(&manifest.resolve(&e.shading_gt))?),
            })
        })
        .collect()
}
