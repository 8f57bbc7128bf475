//! Synthetic training data with full ground truth.
//!
//! A sample composes `I = T ⊗ (a·MS1 + (1 − a)·MS2)` with
//! `MS_k = M ⊗ λ_k ⊗ η_k·l_k`, lights drawn on the Planckian locus. The
//! white-balanced target reuses the same shading under each light's
//! achromatic twin, so `chromaticity(I_wb) = chromaticity(M ⊗ T)`.

pub mod font;
mod noise;
mod text;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use noise::{gen_material, gen_shading_field, value_noise};
pub use text::{gen_text_texture, BACKGROUND_RANGE, INK_RANGE};

use crate::error::{Error, Result};
use crate::illuminant::{planckian_rgb, CCT_MAX, CCT_MIN};
use crate::imaging::{
    hadamard, mix_shadings, render_shading, IlluminantSpec, Light, LinearImage, Mask, Raster, ShadingMap, WBKernel,
    DIV_EPS,
};
use crate::io;

/// Composite intensities above this are clipped and masked out.
pub const CLIP_LEVEL: f32 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisParams {
    pub size: usize,
    pub shading_octaves: usize,
    /// Peak magnitude of the random linear ramp added to the noise, in units
    /// of half the amplitude range; 0 disables it.
    pub shading_gradient: f32,
    pub shading_amplitude: [f32; 2],
    pub tint_lo: [f32; 3],
    pub tint_hi: [f32; 3],
    pub material_variation: f32,
    pub cct_range: [f64; 2],
    pub eta_range: [f32; 2],
    pub two_light_prob: f64,
    /// Probability that a text line is filled; 0 gives blank pages.
    pub text_density: f32,
    pub train_samples: usize,
    pub val_samples: usize,
    pub seed: u64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            size: 64,
            shading_octaves: 3,
            shading_gradient: 0.5,
            shading_amplitude: [0.5, 1.5],
            tint_lo: [0.9; 3],
            tint_hi: [1.0; 3],
            material_variation: 0.02,
            cct_range: [2500.0, 10000.0],
            eta_range: [0.8, 1.2],
            two_light_prob: 0.5,
            text_density: 0.8,
            train_samples: 256,
            val_samples: 64,
            seed: 0,
        }
    }
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidValue(msg));
        let [lo, hi] = self.shading_amplitude;
        if !(lo > 0.0 && hi >= lo && hi <= 2.0) {
            return bad(format!("shading amplitude must satisfy 0 < lo <= hi <= 2, got {lo}..{hi}"));
        }
        let [c0, c1] = self.cct_range;
        if !(CCT_MIN <= c0 && c0 <= c1 && c1 <= CCT_MAX) {
            return bad(format!("cct range {c0}..{c1} outside {CCT_MIN}..{CCT_MAX}"));
        }
        for c in 0..3 {
            let (l, h) = (self.tint_lo[c], self.tint_hi[c]);
            if !(l > 0.0 && l <= h && h <= 1.0) {
                return bad(format!("tint range channel {c}: {l}..{h}"));
            }
        }
        let [e0, e1] = self.eta_range;
        if !(e0 > 0.0 && e1 >= e0) {
            return bad(format!("eta range {e0}..{e1}"));
        }
        if !(0.0..=1.0).contains(&self.two_light_prob) || !(0.0..=1.0).contains(&self.text_density) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.material_variation < 0.0 || self.shading_gradient < 0.0 {
            return bad("variation and gradient strengths must be >= 0".into());
        }
        if self.size < 8 {
            return bad(format!("image size must be >= 8, got {}", self.size));
        }
        Ok(())
    }

    /// Generator for sample `index`: the master seed picks the key, the
    /// index picks the stream, so samples are independent of build order.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightRecord {
    pub cct: f64,
    pub rgb: [f32; 3],
    pub eta: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: LinearImage,
    pub wb_gt: LinearImage,
    pub kernel_gt: WBKernel,
    pub texture: LinearImage,
    pub material_gt: LinearImage,
    /// Achromatic shading `Σ_k a_k·λ_k·η_k·mean(l_k)`.
    pub shading_gt: ShadingMap,
    pub mask: Mask,
    pub lights: Vec<LightRecord>,
    pub mix_a: Option<f32>,
    pub clip_rate: f32,
}

impl Sample {
    /// Colour of the light a white surface would reflect, normalised to
    /// max channel 1. For one light this is the light's own colour.
    pub fn effective_illuminant(&self) -> [f32; 3] {
        let mut acc = [0.0f32; 3];
        let weights = match (self.lights.len(), self.mix_a) {
            (2, Some(a)) => vec![a, 1.0 - a],
            _ => vec![1.0; self.lights.len()],
        };
        for (l, w) in self.lights.iter().zip(weights) {
            for c in 0..3 {
                acc[c] += w * l.eta * l.rgb[c];
            }
        }
        let m = acc.iter().copied().fold(0.0, f32::max);
        acc.map(|v| v / m)
    }
}

fn draw_light<R: Rng>(params: &SynthesisParams, rng: &mut R) -> Result<LightRecord> {
    // uniform in reciprocal temperature, which is closer to perceptual spacing
    let [c0, c1] = params.cct_range;
    let mired = rng.gen_range(1e6 / c1..=1e6 / c0);
    let cct = (1e6 / mired).clamp(c0, c1);
    let rgb = planckian_rgb(cct)?;
    let eta = rng.gen_range(params.eta_range[0]..=params.eta_range[1]);
    Ok(LightRecord { cct, rgb, eta })
}

fn as_shading(img: LinearImage) -> Result<ShadingMap> {
    let (w, h) = (img.width(), img.height());
    ShadingMap::new(w, h, 3, img.into_data())
}

/// Composes `T ⊗ mix(M ⊗ λ_k ⊗ η_k l_k)`.
fn compose(
    texture: &LinearImage,
    material: &LinearImage,
    lights: &[Light],
    lambdas: &[ShadingMap],
    mix_a: Option<f32>,
) -> Result<LinearImage> {
    let ms = lights
        .iter()
        .zip(lambdas)
        .map(|(l, lam)| {
            let coloured = render_shading(&IlluminantSpec::new(vec![*l])?, std::slice::from_ref(lam))?;
            as_shading(hadamard(material, &coloured)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mixed = match (ms.as_slice(), mix_a) {
        ([one], _) => one.clone(),
        ([a, b], Some(w)) => mix_shadings(a, b, w)?,
        _ => return Err(Error::InvalidValue("two lights need a mixing coefficient".into())),
    };
    hadamard(texture, &mixed)
}

/// Draws material, shading and 1–2 lights for `texture` and renders the
/// sample with every ground truth.
pub fn synth_sample<R: Rng>(texture: &LinearImage, params: &SynthesisParams, rng: &mut R) -> Result<Sample> {
    let n = params.size;
    if (texture.width(), texture.height()) != (n, n) {
        return Err(Error::shape(format!("{n}x{n} texture"), format!("{}x{}", texture.width(), texture.height())));
    }
    let material = gen_material(params, rng);
    let two = rng.gen_bool(params.two_light_prob);
    let count = if two { 2 } else { 1 };
    let records = (0..count).map(|_| draw_light(params, rng)).collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<ShadingMap> = (0..count).map(|_| gen_shading_field(params, rng)).collect();
    let mix_a = two.then(|| rng.gen_range(0.0f32..=1.0));
    render_sample(texture, material, records, &lambdas, mix_a)
}

/// Renders a sample from explicit factors. `mix_a` is required exactly
/// when there are two lights.
pub fn render_sample(
    texture: &LinearImage,
    material: LinearImage,
    records: Vec<LightRecord>,
    lambdas: &[ShadingMap],
    mix_a: Option<f32>,
) -> Result<Sample> {
    let (n, h) = (texture.width(), texture.height());
    if texture.data().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidValue("texture must be strictly positive".into()));
    }
    if records.len() != lambdas.len() {
        return Err(Error::CountMismatch {
            expected: records.len(),
            found: lambdas.len(),
        });
    }
    let lights = records.iter().map(|r| Light::new(r.rgb, r.eta)).collect::<Result<Vec<_>>>()?;
    let white: Vec<Light> = lights.iter().map(Light::achromatic).collect();
    let input = compose(texture, &material, &lights, lambdas, mix_a)?;
    let wb_gt = compose(texture, &material, &white, lambdas, mix_a)?;

    let weights = match mix_a {
        Some(a) => vec![a, 1.0 - a],
        None => vec![1.0],
    };
    let mut shading = vec![0.0f32; n * h];
    for ((w, l), lam) in weights.iter().zip(&white).zip(lambdas) {
        for (s, v) in shading.iter_mut().zip(lam.data()) {
            *s += w * l.intensity * v;
        }
    }
    let shading_floor = shading.iter().map(|v| v.max(DIV_EPS)).collect();
    let shading_gt = ShadingMap::new(n, h, 1, shading_floor)?;

    let (input, clipped) = clip(input);
    let valid = |img: &LinearImage, p: usize| img.data()[3 * p..3 * p + 3].iter().all(|v| *v > DIV_EPS);
    let mask_bits: Vec<bool> = (0..n * h)
        .map(|p| {
            !clipped[p]
                && valid(&input, p)
                && valid(&wb_gt, p)
                && valid(texture, p)
                && valid(&material, p)
                && shading[p] > DIV_EPS
        })
        .collect();
    let mask = Mask::new(n, h, mask_bits)?;
    let kernel = (0..n * h * 3)
        .map(|i| if mask.get(i / 3) { wb_gt.data()[i] / input.data()[i] } else { 1.0 })
        .collect();
    let clip_rate = clipped.iter().filter(|c| **c).count() as f32 / (n * h) as f32;

    Ok(Sample {
        input,
        wb_gt,
        kernel_gt: WBKernel::new(n, h, kernel)?,
        texture: texture.clone(),
        material_gt: material,
        shading_gt,
        mask,
        lights: records,
        mix_a,
        clip_rate,
    })
}

fn clip(img: LinearImage) -> (LinearImage, Vec<bool>) {
    let clipped: Vec<bool> = img.data().chunks_exact(3).map(|px| px.iter().any(|v| *v > CLIP_LEVEL)).collect();
    if !clipped.contains(&true) {
        return (img, clipped);
    }
    (img.map(|v| v.min(CLIP_LEVEL)), clipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub input: String,
    pub wb_gt: String,
    pub kernel_gt: String,
    pub texture: String,
    pub material_gt: String,
    pub shading_gt: String,
    pub mask: String,
    pub lights: Vec<LightRecord>,
    pub mix_a: Option<f32>,
    pub seed: u64,
    pub stream: u64,
    pub clip_rate: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::format("manifest", format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";
const SAMPLE_DIR: &str = "samples";

/// Readable texture files (`.png`, `.pfm`) in `dir`, sorted by name.
pub fn load_textures(dir: &Path) -> Result<Vec<LinearImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png" | "pfm")
            )
        })
        .collect();
    paths.sort();
    let textures: Vec<LinearImage> = paths.iter().filter_map(|p| io::read_image(p, true).ok()).collect();
    if textures.is_empty() {
        return Err(Error::EmptyTextureSet(dir.to_path_buf()));
    }
    Ok(textures)
}

/// Random `size×size` crop when the texture is large enough, a resize
/// otherwise. Values are floored so the texture stays strictly positive.
pub fn fit_texture<R: Rng>(tex: &LinearImage, size: usize, rng: &mut R) -> Result<LinearImage> {
    let (w, h) = (tex.width(), tex.height());
    let fitted = if w >= size && h >= size {
        let x0 = rng.gen_range(0..=w - size);
        let y0 = rng.gen_range(0..=h - size);
        tex.crop(x0, y0, size, size)?
    } else {
        let buf = image::Rgb32FImage::from_raw(w as u32, h as u32, tex.data().to_vec())
            .ok_or_else(|| Error::InvalidValue("texture buffer size".into()))?;
        let resized = image::imageops::resize(&buf, size as u32, size as u32, image::imageops::FilterType::Triangle);
        LinearImage::new(size, size, resized.into_raw().into_iter().map(|v| v.max(0.0)).collect())?
    };
    Ok(fitted.map(|v| v.max(1e-3)))
}

fn write_sample(dir: &Path, id: &str, s: &Sample) -> Result<[String; 7]> {
    let names = ["input", "wb_gt", "kernel_gt", "texture", "material_gt", "shading_gt"].map(|k| format!("{SAMPLE_DIR}/{id}_{k}.pfm"));
    io::write_pfm(&dir.join(&names[0]), &s.input)?;
    io::write_pfm(&dir.join(&names[1]), &s.wb_gt)?;
    io::write_pfm(&dir.join(&names[2]), &s.kernel_gt)?;
    io::write_pfm(&dir.join(&names[3]), &s.texture)?;
    io::write_pfm(&dir.join(&names[4]), &s.material_gt)?;
    io::write_pfm(&dir.join(&names[5]), &s.shading_gt)?;
    let mask = format!("{SAMPLE_DIR}/{id}_mask.png");
    io::write_mask_png(&dir.join(&mask), &s.mask)?;
    let [a, b, c, d, e, f] = names;
    Ok([a, b, c, d, e, f, mask])
}

/// Generates sample `index` of the dataset defined by `params`.
pub fn generate(params: &SynthesisParams, textures: Option<&[LinearImage]>, index: u64) -> Result<Sample> {
    let mut rng = params.sample_rng(index);
    let texture = match textures {
        Some(set) => {
            let pick = rng.gen_range(0..set.len());
            fit_texture(&set[pick], params.size, &mut rng)?
        }
        None => gen_text_texture(&mut rng, params),
    };
    synth_sample(&texture, params, &mut rng)
}

/// Writes `train_samples + val_samples` samples under `out` and returns the
/// manifest. Without a texture directory, pages are procedural.
pub fn build_dataset(textures: Option<&Path>, params: &SynthesisParams, out: &Path) -> Result<Manifest> {
    params.validate()?;
    let set = textures.map(load_textures).transpose()?;
    fs::create_dir_all(out.join(SAMPLE_DIR))?;
    let total = params.train_samples + params.val_samples;
    let entries = (0..total)
        .into_par_iter()
        .map(|i| {
            let sample = generate(params, set.as_deref(), i as u64)?;
            let id = format!("s{i:05}");
            let [input, wb_gt, kernel_gt, texture, material_gt, shading_gt, mask] = write_sample(out, &id, &sample)?;
            Ok(ManifestEntry {
                id,
                split: if i < params.train_samples { Split::Train } else { Split::Val },
                input,
                wb_gt,
                kernel_gt,
                texture,
                material_gt,
                shading_gt,
                mask,
                lights: sample.lights,
                mix_a: sample.mix_a,
                seed: params.seed,
                stream: i as u64,
                clip_rate: sample.clip_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join(MANIFEST_NAME);
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    for e in &entries {
        serde_json::to_writer(&mut file, e)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(Manifest {
        root: out.to_path_buf(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{apply_wb, chromaticity, CHROMA_EPS};

    fn small() -> SynthesisParams {
        SynthesisParams {
            size: 16,
            train_samples: 6,
            val_samples: 2,
            ..SynthesisParams::default()
        }
    }

    fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    #[test]
    fn neutral_factors_reproduce_texture() {
        let p = SynthesisParams { size: 16, ..SynthesisParams::default() };
        let t = gen_text_texture(&mut p.sample_rng(0), &p);
        let white = LightRecord { cct: 6504.0, rgb: [1.0; 3], eta: 1.0 };
        let flat = ShadingMap::constant(16, 16, 1.0).unwrap();
        let s = render_sample(&t, LinearImage::constant(16, 16, [1.0; 3]), vec![white], &[flat], None).unwrap();
        assert_eq!(s.input, t);
        assert_eq!(s.wb_gt, t);
        assert!(s.kernel_gt.data().iter().all(|k| *k == 1.0));
        assert_eq!(s.mask.count(), 256);
    }

    #[test]
    fn render_needs_matching_lights_and_mix() {
        let t = LinearImage::constant(8, 8, [0.5; 3]);
        let m = LinearImage::constant(8, 8, [0.9; 3]);
        let light = LightRecord { cct: 5000.0, rgb: [1.0, 0.8, 0.6], eta: 1.0 };
        let flat = ShadingMap::constant(8, 8, 1.0).unwrap();
        assert!(render_sample(&t, m.clone(), vec![light, light], &[flat.clone()], None).is_err());
        assert!(render_sample(&t, m, vec![light, light], &[flat.clone(), flat], None).is_err());
    }

    #[test]
    fn samples_satisfy_construction_identities() {
        let p = SynthesisParams { size: 32, ..SynthesisParams::default() };
        for i in 0..12 {
            let s = generate(&p, None, i).unwrap();
            // single light: I == T ⊗ M ⊗ λ·l/mean(l)
            if let [light] = s.lights.as_slice() {
                let g = light.rgb.iter().sum::<f32>() / 3.0;
                let coloured = LinearImage::from_fn(32, 32, |x, y| {
                    let lam = s.shading_gt.data()[y * 32 + x];
                    light.rgb.map(|c| lam * c / g)
                });
                let expect = hadamard(&hadamard(&s.texture, &s.material_gt).unwrap(), &coloured).unwrap();
                assert!(max_abs_diff(expect.data(), s.input.data()) < 1e-5);
            }
            let wb = apply_wb(&s.kernel_gt, &s.input).unwrap();
            for p in 0..32 * 32 {
                if s.mask.get(p) {
                    for c in 0..3 {
                        let (a, b) = (wb.data()[3 * p + c], s.wb_gt.data()[3 * p + c]);
                        assert!((a - b).abs() <= 1e-5 * b.max(1.0), "sample {i} pixel {p}: {a} vs {b}");
                    }
                }
            }
            let c_wb = chromaticity(&s.wb_gt, CHROMA_EPS);
            let c_mt = chromaticity(&hadamard(&s.material_gt, &s.texture).unwrap(), CHROMA_EPS);
            for p in 0..32 * 32 {
                if s.mask.get(p) {
                    let (a, b) = (c_wb.pixel(p), c_mt.pixel(p));
                    assert!(max_abs_diff(&a, &b) < 1e-5, "sample {i}: {a:?} vs {b:?}");
                }
            }
            // I_wb == M ⊗ T ⊗ λ
            let recon = hadamard(&hadamard(&s.material_gt, &s.texture).unwrap(), &s.shading_gt).unwrap();
            assert!(max_abs_diff(recon.data(), s.wb_gt.data()) < 1e-5);
            assert_eq!(s.clip_rate, 0.0);
        }
    }

    #[test]
    fn input_is_texture_times_coloured_shading() {
        let p = SynthesisParams { size: 16, two_light_prob: 1.0, ..SynthesisParams::default() };
        let mut rng = p.sample_rng(3);
        let t = gen_text_texture(&mut rng, &p);
        let s = synth_sample(&t, &p, &mut rng).unwrap();
        let shading = crate::imaging::divide_safe(&s.input, &t, DIV_EPS).unwrap();
        let back = hadamard(&t, &shading).unwrap();
        assert!(max_abs_diff(back.data(), s.input.data()) < 1e-5);
        assert_eq!(s.lights.len(), 2);
        assert!(s.mix_a.is_some());
    }

    #[test]
    fn single_light_when_mixing_disabled() {
        let p = SynthesisParams { two_light_prob: 0.0, ..small() };
        for i in 0..20 {
            let s = generate(&p, None, i).unwrap();
            assert_eq!(s.lights.len(), 1);
            assert!(s.mix_a.is_none());
            // a single light gives a spatially constant kernel
            let k0 = &s.kernel_gt.data()[..3];
            assert!(s.kernel_gt.data().chunks_exact(3).all(|k| max_abs_diff(k, k0) < 1e-4));
        }
    }

    #[test]
    fn effective_illuminant_of_single_light_is_its_colour() {
        let s = generate(&SynthesisParams { two_light_prob: 0.0, ..small() }, None, 1).unwrap();
        assert!(max_abs_diff(&s.effective_illuminant(), &s.lights[0].rgb) < 1e-6);
    }

    #[test]
    fn rejects_bad_params_and_textures() {
        assert!(SynthesisParams { shading_amplitude: [0.0, 1.0], ..small() }.validate().is_err());
        assert!(SynthesisParams { shading_amplitude: [0.5, 2.5], ..small() }.validate().is_err());
        assert!(SynthesisParams { cct_range: [1000.0, 5000.0], ..small() }.validate().is_err());
        let p = small();
        let mut rng = p.sample_rng(0);
        let zero = LinearImage::constant(16, 16, [0.0; 3]);
        assert!(synth_sample(&zero, &p, &mut rng).is_err());
        let wrong = LinearImage::constant(8, 8, [0.5; 3]);
        assert!(matches!(synth_sample(&wrong, &p, &mut rng), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn dataset_is_reproducible_and_manifest_round_trips() {
        let p = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = build_dataset(None, &p, a.path()).unwrap();
        build_dataset(None, &p, b.path()).unwrap();
        let text_a = fs::read(a.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(text_a, fs::read(b.path().join(MANIFEST_NAME)).unwrap());
        for e in &ma.entries {
            for f in [&e.input, &e.wb_gt, &e.kernel_gt, &e.texture, &e.material_gt, &e.shading_gt] {
                assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
            }
        }
        let loaded = Manifest::load(&a.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(loaded.entries, ma.entries);
        assert_eq!(loaded.split(Split::Train).count(), 6);
        assert_eq!(loaded.split(Split::Val).count(), 2);
        let e = &loaded.entries[0];
        let img = io::read_image_pfm(&loaded.resolve(&e.input)).unwrap();
        assert_eq!(img, generate(&p, None, 0).unwrap().input);
    }

    #[test]
    fn texture_directory_is_used() {
        let dir = tempfile::tempdir().unwrap();
        let tex = LinearImage::from_fn(40, 20, |x, _| [0.2 + 0.01 * x as f32; 3]);
        io::write_png(&dir.path().join("page.png"), &tex, true, true).unwrap();
        fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
        let set = load_textures(dir.path()).unwrap();
        assert_eq!(set.len(), 1);
        let p = small();
        let s = generate(&p, Some(&set), 0).unwrap();
        assert_eq!((s.texture.width(), s.texture.height()), (16, 16));
        assert!(s.texture.data().iter().all(|v| *v > 0.0));

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_textures(empty.path()), Err(Error::EmptyTextureSet(_))));
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(build_dataset(Some(empty.path()), &p, out.path()), Err(Error::EmptyTextureSet(_))));
    }
}
