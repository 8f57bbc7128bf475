//! Physics identities, persistence round trips and the oracle-path
//! reconstruction, each reported as a measured check.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Check, Report};
use crate::error::Result;
use crate::imaging::{chromaticity, divide_safe, hadamard, LinearImage, Mask, Raster, ShadingMap, CHROMA_EPS, DIV_EPS};
use crate::io::{decode_pfm, encode_pfm, read_mask_png, read_png, write_mask_png, write_png};
use crate::nn::{Checkpoint, SmtNet};
use crate::pipeline::{decompose, OracleSeparator, OracleWhiteBalancer};
use crate::synth::{generate, SynthesisParams};

pub const PHYSICS_PIXELS: usize = 1000;
pub const PHYSICS_TOLERANCE: f64 = 1e-5;
pub const ORACLE_SAMPLES: usize = 64;
pub const ORACLE_TOLERANCE: f64 = 1e-4;
/// Shading floor for the compose/divide round trip.
pub const MIN_SHADING: f32 = 1e-3;

fn max_abs(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
}

fn random_image(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> LinearImage {
    LinearImage::from_fn(n, 1, |_, _| std::array::from_fn(|_| rng.gen_range(lo..hi)))
}

/// `chromaticity(k·x) == chromaticity(x)` for random pixels and scales
/// spanning four decades.
pub fn chromaticity_scale_invariance(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_image(&mut rng, PHYSICS_PIXELS, 0.01, 1.0);
    let scales: Vec<f32> = (0..PHYSICS_PIXELS).map(|_| 10f32.powf(rng.gen_range(-2.0..2.0))).collect();
    let scaled = LinearImage::from_fn(PHYSICS_PIXELS, 1, |p, _| x.pixel(p, 0).map(|v| v * scales[p]));
    let (a, b) = (chromaticity(&x, CHROMA_EPS), chromaticity(&scaled, CHROMA_EPS));
    Ok(Check::at_most("physics", "chromaticity_scale_invariance", max_abs(a.data(), b.data()), PHYSICS_TOLERANCE))
}

/// `(R ⊗ S) ⊘ S == R` wherever `S ≥ 1e-3`.
pub fn compose_divide_round_trip(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_image(&mut rng, PHYSICS_PIXELS, 0.0, 1.0);
    let s: Vec<f32> = (0..PHYSICS_PIXELS).map(|_| 10f32.powf(rng.gen_range(MIN_SHADING.log10()..0.3))).collect();
    let s = ShadingMap::new(PHYSICS_PIXELS, 1, 1, s)?;
    let back = divide_safe(&hadamard(&r, &s)?, &s, DIV_EPS)?;
    Ok(Check::at_most("physics", "compose_divide_round_trip", max_abs(back.data(), r.data()), PHYSICS_TOLERANCE))
}

/// `chromaticity(I_wb) == chromaticity(M ⊗ T)` on the valid pixels of
/// synthetic samples (at least 1000 pixels in total).
pub fn balanced_chromaticity_identity(seed: u64) -> Result<Check> {
    let params = SynthesisParams {
        size: 16,
        seed,
        ..SynthesisParams::default()
    };
    let samples = PHYSICS_PIXELS.div_ceil(16 * 16);
    let mut worst = 0.0f64;
    for i in 0..samples as u64 {
        let s = generate(&params, None, i)?;
        let a = chromaticity(&s.wb_gt, CHROMA_EPS);
        let b = chromaticity(&hadamard(&s.material_gt, &s.texture)?, CHROMA_EPS);
        for p in (0..s.mask.width() * s.mask.height()).filter(|p| s.mask.get(*p) && a.mask().get(*p) && b.mask().get(*p)) {
            worst = worst.max(max_abs(&a.pixel(p), &b.pixel(p)));
        }
    }
    Ok(Check::at_most("physics", "balanced_chromaticity_identity", worst, PHYSICS_TOLERANCE))
}

/// Ground-truth white balance, material and shading injected in place of
/// both networks reconstruct every input. Reports the worst per-sample mean
/// L1 over the validation split.
pub fn oracle_path(seed: u64, samples: usize, size: usize) -> Result<Vec<Check>> {
    let params = SynthesisParams {
        size,
        seed,
        ..SynthesisParams::default()
    };
    let (mut worst_recon, mut worst_wb) = (0.0f64, 0.0f64);
    for k in 0..samples {
        // validation indices follow the training ones
        let s = generate(&params, None, (params.train_samples + k) as u64)?;
        let d = decompose(
            &s.input,
            &OracleWhiteBalancer(s.kernel_gt.clone()),
            &OracleSeparator {
                material: s.material_gt.clone(),
                shading: s.shading_gt.clone(),
            },
            Some(&s.texture),
        )?;
        let l1 = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64;
        worst_recon = worst_recon.max(l1(d.reconstruct_input()?.data(), s.input.data()));
        worst_wb = worst_wb.max(l1(d.wb_image.data(), s.wb_gt.data()));
    }
    Ok(vec![
        Check::at_most("oracle", "input_reconstruction_l1", worst_recon, ORACLE_TOLERANCE),
        Check::at_most("oracle", "balanced_image_l1", worst_wb, ORACLE_TOLERANCE),
    ])
}

/// PFM, PNG mask, 16-bit PNG and checkpoint round trips. File-based checks
/// write under `scratch`.
pub fn round_trips(seed: u64, scratch: &Path) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let img = LinearImage::from_fn(13, 7, |_, _| std::array::from_fn(|_| rng.gen_range(0.0f32..4.0)));
    let back = decode_pfm(&encode_pfm(img.width(), img.height(), 3, img.data()))?;
    checks.push(Check::flag("round_trip", "pfm_bit_exact", back.data == img.data()));

    std::fs::create_dir_all(scratch)?;
    let mask = Mask::new(9, 5, (0..45).map(|_| rng.gen_bool(0.5)).collect())?;
    let path = scratch.join("selftest_mask.png");
    write_mask_png(&path, &mask)?;
    checks.push(Check::flag("round_trip", "mask_png_exact", read_mask_png(&path)? == mask));

    let unit = img.map(|v| v / 4.0);
    let path = scratch.join("selftest_16bit.png");
    write_png(&path, &unit, false, true)?;
    let err = max_abs(read_png(&path, false)?.data(), unit.data());
    checks.push(Check::at_most("round_trip", "png16_quantisation", err, 0.5 / 65535.0 + 1e-7));

    let net = SmtNet::new(2, 4, seed)?;
    let bytes = Checkpoint::from_net(&net.0, None, 7, seed).to_bytes();
    let again = Checkpoint::from_bytes(&bytes)?.to_bytes();
    checks.push(Check::flag("round_trip", "checkpoint_bit_exact", bytes == again));
    Ok(checks)
}

/// Every suite, with the validation-size oracle path at 64×64.
pub fn run(seed: u64, scratch: &Path) -> Result<Report> {
    let mut checks = vec![
        chromaticity_scale_invariance(seed)?,
        compose_divide_round_trip(seed)?,
        balanced_chromaticity_identity(seed)?,
    ];
    checks.extend(oracle_path(seed, ORACLE_SAMPLES, 64)?);
    checks.extend(round_trips(seed, scratch)?);
    Ok(Report { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physics_checks_pass() {
        for seed in 0..3 {
            assert!(chromaticity_scale_invariance(seed).unwrap().passed);
            assert!(compose_divide_round_trip(seed).unwrap().passed);
            let c = balanced_chromaticity_identity(seed).unwrap();
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn oracle_path_passes_on_small_samples() {
        for c in oracle_path(1, 8, 32).unwrap() {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn round_trips_pass() {
        let dir = tempfile::tempdir().unwrap();
        for c in round_trips(0, dir.path()).unwrap() {
            assert!(c.passed, "{c}");
        }
    }
}
