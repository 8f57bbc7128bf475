//! Scoring decompositions against synthetic ground truth, or arbitrary
//! result/reference image pairs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::infer::{decompose, Separator, WhiteBalancer};
use crate::error::{Error, Result};
use crate::imaging::{hadamard, LinearImage, Raster};
use crate::io::{read_image, read_image_pfm, read_mask_png, read_shading_pfm};
use crate::metrics::{
    angular_error, cer, implied_illuminant, local_distortion, ms_ssim, ms_ssim_auto, run_ocr, wer, MetricReport,
    SampleMetrics,
};
use crate::synth::{Manifest, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// External OCR command; `{input}` is replaced by the image path.
    pub ocr_cmd: Option<String>,
    pub ocr_timeout_secs: f64,
    pub ld_block: usize,
    pub ld_search: usize,
    /// MS-SSIM scale count; unset picks the largest that fits.
    pub ms_ssim_levels: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ocr_cmd: None,
            ocr_timeout_secs: 60.0,
            ld_block: 8,
            ld_search: 4,
            ms_ssim_levels: None,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.ocr_timeout_secs > 0.0 && self.ocr_timeout_secs.is_finite()) {
            return Err(Error::Config(format!("ocr_timeout_secs must be > 0, got {}", self.ocr_timeout_secs)));
        }
        if self.ld_block == 0 {
            return Err(Error::Config("ld_block must be > 0".into()));
        }
        if self.ms_ssim_levels == Some(0) {
            return Err(Error::Config("ms_ssim_levels must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.ocr_timeout_secs)
    }

    fn ms_ssim(&self, a: &LinearImage, b: &LinearImage) -> Result<f64> {
        match self.ms_ssim_levels {
            Some(l) => ms_ssim(a, b, l),
            None => ms_ssim_auto(a, b),
        }
    }
}

fn mean_abs(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len().max(1) as f64
}

/// Runs both stages on every sample of `split` without the texture (as at
/// test time) and scores the outputs against ground truth.
///
/// Per sample: `ms_ssim` and `ld` of R̂ against `M ⊗ T`, `ms_ssim_input`
/// (the unprocessed input against the same target), L1 errors of the
/// balanced image, material and shading, and `angular_error` on
/// single-light samples.
pub fn evaluate_manifest(
    manifest: &Manifest,
    split: Split,
    wb: &(dyn WhiteBalancer + Sync),
    separator: &(dyn Separator + Sync),
    opts: &EvalOptions,
) -> Result<MetricReport> {
    opts.validate()?;
    let entries: Vec<_> = manifest.split(split).collect();
    if entries.is_empty() {
        return Err(Error::InvalidValue(format!("manifest has no {split:?} samples")));
    }
    let rows = entries
        .par_iter()
        .map(|e| {
            let input = read_image_pfm(&manifest.resolve(&e.input))?;
            let wb_gt = read_image_pfm(&manifest.resolve(&e.wb_gt))?;
            let texture = read_image_pfm(&manifest.resolve(&e.texture))?;
            let material = read_image_pfm(&manifest.resolve(&e.material_gt))?;
            let shading = read_shading_pfm(&manifest.resolve(&e.shading_gt))?;
            let mask = read_mask_png(&manifest.resolve(&e.mask))?;
            let d = decompose(&input, wb, separator, None)?;
            let target = hadamard(&material, &texture)?;

            let mut values = BTreeMap::new();
            values.insert("ms_ssim".to_string(), opts.ms_ssim(&d.reflectance, &target)?);
            values.insert("ms_ssim_input".to_string(), opts.ms_ssim(&input, &target)?);
            values.insert("ld".to_string(), local_distortion(&d.reflectance, &target, opts.ld_block, opts.ld_search)?);
            values.insert("wb_l1".to_string(), mean_abs(d.wb_image.data(), wb_gt.data()));
            values.insert("material_l1".to_string(), mean_abs(d.material.data(), material.data()));
            values.insert("shading_l1".to_string(), mean_abs(d.shading_predicted.data(), shading.data()));
            if let [light] = e.lights.as_slice() {
                let est = implied_illuminant(&input, &d.wb_image, &mask)?;
                values.insert("angular_error".to_string(), angular_error(est, light.rgb.map(f64::from))?);
            }
            Ok(SampleMetrics { id: e.id.clone(), values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_samples(rows))
}

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    /// Image under evaluation.
    pub image: PathBuf,
    /// Ground-truth image of the same size.
    pub reference: PathBuf,
    /// Ground-truth text, scored against OCR output when an OCR command is
    /// configured.
    #[serde(default)]
    pub text: Option<String>,
}

/// Reads a JSONL pairs file; relative paths resolve against its directory.
pub fn load_pairs(path: &Path) -> Result<Vec<PairEntry>> {
    let root = path.parent().unwrap_or(Path::new("."));
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut p: PairEntry = serde_json::from_str(l)?;
            p.image = root.join(&p.image);
            p.reference = root.join(&p.reference);
            Ok(p)
        })
        .collect()
}

/// Collapses runs of whitespace so OCR layout differences do not count as
/// errors.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// MS-SSIM and LD for each pair; CER and WER of the OCR transcript when an
/// OCR command is set and the pair has text. An unusable OCR command is
/// reported in `notes` and the text metrics are left out.
pub fn evaluate_pairs(pairs: &[PairEntry], opts: &EvalOptions) -> Result<MetricReport> {
    opts.validate()?;
    let mut rows = Vec::with_capacity(pairs.len());
    let mut notes = Vec::new();
    let mut ocr = opts.ocr_cmd.clone();
    for p in pairs {
        let a = read_image(&p.image, true)?;
        let b = read_image(&p.reference, true)?;
        let mut values = BTreeMap::new();
        values.insert("ms_ssim".to_string(), opts.ms_ssim(&a, &b)?);
        values.insert("ld".to_string(), local_distortion(&a, &b, opts.ld_block, opts.ld_search)?);
        if let (Some(cmd), Some(text)) = (&ocr, &p.text) {
            match run_ocr(&p.image, cmd, opts.timeout()) {
                Ok(hyp) => {
                    let (r, h) = (normalize_text(text), normalize_text(&hyp));
                    values.insert("cer".to_string(), cer(&r, &h)?);
                    values.insert("wer".to_string(), wer(&r, &h)?);
                }
                Err(e @ (Error::OcrUnavailable(_) | Error::Timeout(_))) => {
                    notes.push(format!("OCR skipped: {e}"));
                    ocr = None;
                }
                Err(e) => return Err(e),
            }
        }
        rows.push(SampleMetrics { id: p.id.clone(), values });
    }
    let mut report = MetricReport::from_samples(rows);
    report.notes = notes;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_png;
    use crate::pipeline::{OracleSeparator, OracleWhiteBalancer};
    use crate::synth::{build_dataset, SynthesisParams};

    #[test]
    fn oracle_decomposition_scores_perfectly_on_single_samples() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthesisParams { size: 48, train_samples: 1, val_samples: 2, seed: 4, ..SynthesisParams::default() };
        let manifest = build_dataset(None, &params, dir.path()).unwrap();
        for e in manifest.split(Split::Val) {
            // one sample at a time so the oracles match
            let one = Manifest { root: manifest.root.clone(), entries: vec![e.clone()] };
            let kernel = crate::io::read_pfm(&manifest.resolve(&e.kernel_gt)).unwrap();
            let kernel = crate::imaging::WBKernel::new(kernel.width, kernel.height, kernel.data).unwrap();
            let sep = OracleSeparator {
                material: read_image_pfm(&manifest.resolve(&e.material_gt)).unwrap(),
                shading: read_shading_pfm(&manifest.resolve(&e.shading_gt)).unwrap(),
            };
            let r = evaluate_manifest(&one, Split::Val, &OracleWhiteBalancer(kernel), &sep, &EvalOptions::default()).unwrap();
            assert_eq!(r.count, 1);
            assert!(r.metrics["wb_l1"] < 1e-5);
            assert!(r.metrics["material_l1"] == 0.0 && r.metrics["shading_l1"] == 0.0);
            assert!((r.metrics["ms_ssim"] - 1.0).abs() < 1e-3, "{}", r.metrics["ms_ssim"]);
            assert!(r.metrics["ms_ssim_input"] < r.metrics["ms_ssim"]);
            if e.lights.len() == 1 {
                assert!(r.metrics["angular_error"] < 1e-2);
            }
        }
    }

    #[test]
    fn pairs_file_and_missing_ocr() {
        let dir = tempfile::tempdir().unwrap();
        let a = LinearImage::from_fn(48, 48, |x, y| [((x * 7 + y * 3) % 11) as f32 / 11.0; 3]);
        write_png(&dir.path().join("a.png"), &a, true, false).unwrap();
        write_png(&dir.path().join("b.png"), &a, true, false).unwrap();
        let list = dir.path().join("pairs.jsonl");
        fs::write(&list, "{\"id\":\"x\",\"image\":\"a.png\",\"reference\":\"b.png\",\"text\":\"HELLO\"}\n").unwrap();
        let pairs = load_pairs(&list).unwrap();
        let opts = EvalOptions { ocr_cmd: Some("no-such-ocr-binary-xyz {input}".into()), ..EvalOptions::default() };
        let r = evaluate_pairs(&pairs, &opts).unwrap();
        assert!((r.metrics["ms_ssim"] - 1.0).abs() < 1e-6);
        assert_eq!(r.metrics["ld"], 0.0);
        assert!(!r.metrics.contains_key("cer"));
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn text_normalisation() {
        assert_eq!(normalize_text("  A  B\n\nC "), "A B C");
    }
}
