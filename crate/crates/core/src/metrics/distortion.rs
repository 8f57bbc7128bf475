//! Block-matching approximation of local distortion: the mean length of
//! the offset that best aligns each textured block of `a` with `b`.
//! Approximate; meant for relative comparisons.

use super::ssim::Plane;
use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Raster};

/// Blocks flatter than this carry no alignment information and are skipped.
const MIN_VARIANCE: f64 = 1e-8;

fn block_stats(p: &Plane, x0: usize, y0: usize, n: usize) -> (f64, f64) {
    let (mut s, mut ss) = (0.0, 0.0);
    for y in y0..y0 + n {
        for v in &p.data[y * p.width + x0..y * p.width + x0 + n] {
            s += v;
            ss += v * v;
        }
    }
    let m = s / (n * n) as f64;
    (m, ss / (n * n) as f64 - m * m)
}

/// Zero-mean normalised cross-correlation of two blocks.
fn zncc(a: &Plane, ax: usize, ay: usize, b: &Plane, bx: usize, by: usize, n: usize) -> f64 {
    let (ma, va) = block_stats(a, ax, ay, n);
    let (mb, vb) = block_stats(b, bx, by, n);
    if vb <= MIN_VARIANCE {
        return -1.0;
    }
    let mut cov = 0.0;
    for y in 0..n {
        let ra = &a.data[(ay + y) * a.width + ax..][..n];
        let rb = &b.data[(by + y) * b.width + bx..][..n];
        cov += ra.iter().zip(rb).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
    }
    cov / (n * n) as f64 / (va * vb).sqrt()
}

/// Mean best-match displacement in pixels. Only blocks whose whole search
/// window lies inside the image are scored; ties go to the shorter offset.
/// Returns 0 when no block has texture.
pub fn local_distortion(a: &LinearImage, b: &LinearImage, block: usize, search: usize) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(format!("{}x{}", a.width(), a.height()), format!("{}x{}", b.width(), b.height())));
    }
    if block == 0 {
        return Err(Error::InvalidValue("block size must be >= 1".into()));
    }
    let need = block + 2 * search;
    if a.width() < need || a.height() < need {
        return Err(Error::TooSmall(format!(
            "block {block} with search {search} needs sides >= {need}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (pa, pb) = (Plane::luminance(a), Plane::luminance(b));
    let s = search as isize;
    let (mut total, mut count) = (0.0, 0usize);
    let mut y0 = search;
    while y0 + block + search <= pa.height {
        let mut x0 = search;
        while x0 + block + search <= pa.width {
            if block_stats(&pa, x0, y0, block).1 > MIN_VARIANCE {
                let mut best = (f64::NEG_INFINITY, 0.0f64);
                for dy in -s..=s {
                    for dx in -s..=s {
                        let (bx, by) = ((x0 as isize + dx) as usize, (y0 as isize + dy) as usize);
                        let score = zncc(&pa, x0, y0, &pb, bx, by, block);
                        let len = ((dx * dx + dy * dy) as f64).sqrt();
                        if score > best.0 + 1e-12 || ((score - best.0).abs() <= 1e-12 && len < best.1) {
                            best = (score, len);
                        }
                    }
                }
                total += best.1;
                count += 1;
            }
            x0 += block;
        }
        y0 += block;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> LinearImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.1..0.9)).collect();
        LinearImage::from_fn(w, h, |x, y| [base[y * w + x]; 3])
    }

    fn shift_right(img: &LinearImage, dx: usize) -> LinearImage {
        let w = img.width();
        LinearImage::from_fn(w, img.height(), |x, y| img.pixel((x + w - dx) % w, y))
    }

    #[test]
    fn identical_images_have_zero_distortion() {
        let a = textured(48, 48, 1);
        assert_eq!(local_distortion(&a, &a, 8, 4).unwrap(), 0.0);
    }

    #[test]
    fn recovers_constructed_shift() {
        let a = textured(64, 64, 2);
        let b = shift_right(&a, 2);
        let ld = local_distortion(&a, &b, 8, 4).unwrap();
        assert!((ld - 2.0).abs() < 0.5, "{ld}");
    }

    #[test]
    fn brightness_scaling_is_ignored() {
        let a = textured(48, 48, 3);
        assert_eq!(local_distortion(&a, &a.map(|v| 1.2 * v), 8, 3).unwrap(), 0.0);
        let b = shift_right(&a, 2).map(|v| 1.2 * v);
        let ld = local_distortion(&a, &b, 8, 3).unwrap();
        assert!((ld - 2.0).abs() < 0.5, "{ld}");
    }

    #[test]
    fn flat_images_and_size_errors() {
        let flat = LinearImage::constant(32, 32, [0.5; 3]);
        assert_eq!(local_distortion(&flat, &flat, 8, 2).unwrap(), 0.0);
        assert!(matches!(local_distortion(&flat, &flat, 16, 10), Err(Error::TooSmall(_))));
        let other = LinearImage::constant(16, 32, [0.5; 3]);
        assert!(matches!(local_distortion(&flat, &other, 8, 2), Err(Error::ShapeMismatch { .. })));
    }
}
