//! Raster file I/O: PFM for quantitative data, PNG for interchange and
//! previews.
//!
//! PFM files are written little-endian (negative scale) with rows stored
//! bottom-to-top, as the format prescribes. PNG pixels are optionally
//! sRGB-decoded on read and sRGB-encoded on write; nothing else applies a
//! transfer function.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Mask, Raster, ShadingMap};

pub fn srgb_to_linear(v: f32) -> f32 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Raw PFM payload, rows top-to-bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    debug_assert!(channels == 1 || channels == 3);
    debug_assert_eq!(data.len(), width * height * channels);
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Pfm> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::format("PFM", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let channels = match token(&mut pos)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format("PFM", format!("bad magic {other:?}"))),
    };
    let parse = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::format("PFM", format!("bad dimension {s:?}")))
    };
    let width = parse(token(&mut pos)?)?;
    let height = parse(token(&mut pos)?)?;
    let scale: f32 = token(&mut pos)?
        .parse()
        .map_err(|_| Error::format("PFM", "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", "scale must be non-zero"));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let n = width * height * channels;
    let payload = bytes
        .get(pos..pos + n * 4)
        .ok_or_else(|| Error::format("PFM", "truncated payload"))?;
    let little = scale < 0.0;
    let mut data = vec![0.0f32; n];
    let row = width * channels;
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(path: &Path, raster: &impl Raster) -> Result<()> {
    let bytes = encode_pfm(raster.width(), raster.height(), raster.channels(), raster.data());
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    decode_pfm(&fs::read(path)?)
}

pub fn read_image_pfm(path: &Path) -> Result<LinearImage> {
    let pfm = read_pfm(path)?;
    if pfm.channels != 3 {
        return Err(Error::format("PFM", format!("{} is not RGB", path.display())));
    }
    LinearImage::new(pfm.width, pfm.height, pfm.data)
}

pub fn read_shading_pfm(path: &Path) -> Result<ShadingMap> {
    let pfm = read_pfm(path)?;
    ShadingMap::new(pfm.width, pfm.height, pfm.channels, pfm.data)
}

/// Reads an 8- or 16-bit PNG into [0, 1] floats, sRGB-decoding when asked.
pub fn read_png(path: &Path, srgb_decode: bool) -> Result<LinearImage> {
    let img = image::open(path)?.to_rgb32f();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| if srgb_decode { srgb_to_linear(v) } else { v })
        .collect();
    LinearImage::new(w as usize, h as usize, data)
}

/// Reads PFM or PNG depending on the extension.
pub fn read_image(path: &Path, srgb_decode: bool) -> Result<LinearImage> {
    match extension(path).as_deref() {
        Some("pfm") => read_image_pfm(path),
        Some("png") => read_png(path, srgb_decode),
        _ => Err(Error::format(
            "image",
            format!("unsupported file type: {}", path.display()),
        )),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Writes an RGB raster as PNG, clamping to [0, 1] and optionally
/// sRGB-encoding.
pub fn write_png(path: &Path, raster: &impl Raster, srgb_encode: bool, sixteen_bit: bool) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let value = |p: usize, c: usize| {
        let v = raster.sample(p, c).clamp(0.0, 1.0);
        if srgb_encode {
            linear_to_srgb(v)
        } else {
            v
        }
    };
    if sixteen_bit {
        let buf = ImageBuffer::<Rgb<u16>, _>::from_fn(w, h, |x, y| {
            let p = (y * w + x) as usize;
            Rgb([0, 1, 2].map(|c| (value(p, c) * 65535.0).round() as u16))
        });
        buf.save(path)?;
    } else {
        let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(w, h, |x, y| {
            let p = (y * w + x) as usize;
            Rgb([0, 1, 2].map(|c| (value(p, c) * 255.0).round() as u8))
        });
        buf.save(path)?;
    }
    Ok(())
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let buf = ImageBuffer::<Luma<u8>, _>::from_fn(w, h, |x, y| {
        Luma([if mask.get((y * w + x) as usize) { 255 } else { 0 }])
    });
    buf.save(path)?;
    Ok(())
}

pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
    Mask::new(w as usize, h as usize, data)
}
