//! Evaluation measures: MS-SSIM, block-matching local distortion, CER/WER,
//! illuminant angular error, and an optional external OCR hook.

mod distortion;
mod ocr;
mod ssim;
mod text;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use distortion::local_distortion;
pub use ocr::{run_ocr, PLACEHOLDER};
pub use ssim::{min_size as ms_ssim_min_size, ms_ssim, ms_ssim_auto, ms_ssim_plane, Plane, WEIGHTS as MS_SSIM_WEIGHTS};
pub use text::{cer, edit_distance, wer};

use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Mask, Raster};

/// Angle in degrees between two RGB vectors.
pub fn angular_error(estimated: [f64; 3], truth: [f64; 3]) -> Result<f64> {
    let norm = |v: [f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(estimated), norm(truth));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = estimated.iter().zip(&truth).map(|(a, b)| a * b).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// Illuminant implied by a white-balance correction:
/// `l^c = Σ_p I^c / Σ_p I_wb^c` over masked pixels.
pub fn implied_illuminant(image: &LinearImage, balanced: &LinearImage, mask: &Mask) -> Result<[f64; 3]> {
    if (image.width(), image.height()) != (balanced.width(), balanced.height())
        || (mask.width(), mask.height()) != (image.width(), image.height())
    {
        return Err(Error::shape(
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", balanced.width(), balanced.height()),
        ));
    }
    let (mut num, mut den) = ([0.0f64; 3], [0.0f64; 3]);
    for p in (0..image.pixels()).filter(|p| mask.get(*p)) {
        for c in 0..3 {
            num[c] += image.data()[3 * p + c] as f64;
            den[c] += balanced.data()[3 * p + c] as f64;
        }
    }
    if den.iter().any(|d| *d <= 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(std::array::from_fn(|c| num[c] / den[c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub values: BTreeMap<String, f64>,
}

/// Aggregate metrics (per-key means over the samples that report the key)
/// plus the per-sample table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub count: usize,
    pub per_sample: Vec<SampleMetrics>,
    /// Caveats such as a skipped OCR pass.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn from_samples(per_sample: Vec<SampleMetrics>) -> Self {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for s in &per_sample {
            for (k, v) in &s.values {
                let e = sums.entry(k.clone()).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        Self {
            metrics: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
            count: per_sample.len(),
            per_sample,
            notes: Vec::new(),
        }
    }

    /// Plain-text table: one row per sample, then the means.
    pub fn table(&self) -> String {
        let keys: Vec<&String> = self.metrics.keys().collect();
        let id_w = self.per_sample.iter().map(|s| s.id.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<id_w$}", "sample");
        for k in &keys {
            let _ = write!(out, "  {:>12}", k);
        }
        out.push('\n');
        let row = |out: &mut String, id: &str, values: &BTreeMap<String, f64>| {
            let _ = write!(out, "{id:<id_w$}");
            for k in &keys {
                match values.get(*k) {
                    Some(v) => {
                        let _ = write!(out, "  {v:>12.6}");
                    }
                    None => {
                        let _ = write!(out, "  {:>12}", "-");
                    }
                }
            }
            out.push('\n');
        };
        for s in &self.per_sample {
            row(&mut out, &s.id, &s.values);
        }
        row(&mut out, "mean", &self.metrics);
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn angular_error_cases() {
        assert!(angular_error([0.3, 0.5, 0.2], [0.3, 0.5, 0.2]).unwrap().abs() < 1e-6);
        assert!((angular_error([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!((angular_error([1.0, 1.0, 0.0], [1.0, 0.0, 0.0]).unwrap() - 45.0).abs() < 1e-12);
        assert!(matches!(angular_error([0.0; 3], [1.0, 0.0, 0.0]), Err(Error::ZeroVector)));
    }

    proptest! {
        #[test]
        fn angular_error_symmetric_and_scale_invariant(
            a in prop::array::uniform3(0.01f64..1.0),
            b in prop::array::uniform3(0.01f64..1.0),
            s in 0.1f64..10.0,
            t in 0.1f64..10.0,
        ) {
            let e = angular_error(a, b).unwrap();
            prop_assert!((e - angular_error(b, a).unwrap()).abs() < 1e-9);
            prop_assert!((e - angular_error(a.map(|v| v * s), b.map(|v| v * t)).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn implied_illuminant_of_exact_correction() {
        let l = [1.0f32, 0.7, 0.4];
        let wb = LinearImage::from_fn(4, 4, |x, y| [0.2 + 0.1 * x as f32, 0.3 + 0.05 * y as f32, 0.5]);
        let img = LinearImage::from_fn(4, 4, |x, y| {
            let p = wb.pixel(x, y);
            [p[0] * l[0] * 1.5, p[1] * l[1] * 1.5, p[2] * l[2] * 1.5]
        });
        let est = implied_illuminant(&img, &wb, &Mask::full(4, 4)).unwrap();
        assert!(angular_error(est, l.map(f64::from)).unwrap() < 1e-4);
    }

    #[test]
    fn report_aggregates_are_means() {
        let rows: Vec<SampleMetrics> = (0..5)
            .map(|i| SampleMetrics {
                id: format!("s{i}"),
                values: [("a".to_string(), i as f64), ("b".to_string(), 2.0 * i as f64)].into_iter().collect(),
            })
            .collect();
        let r = MetricReport::from_samples(rows);
        assert_eq!(r.count, 5);
        assert!((r.metrics["a"] - 2.0).abs() < 1e-12);
        assert!((r.metrics["b"] - 4.0).abs() < 1e-12);
        let table = r.table();
        assert_eq!(table.lines().count(), 7);
        assert!(table.lines().last().unwrap().starts_with("mean"));
    }
}
