//! Band-limited random fields for shading and paper material.

use rand::Rng;

use super::SynthesisParams;
use crate::imaging::{LinearImage, ShadingMap};

fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Sum of value-noise octaves in `[-1, 1]`. Octave `o` uses a lattice of
/// `2·2^o` cells per side with amplitude `0.5^o`.
pub fn value_noise<R: Rng>(rng: &mut R, width: usize, height: usize, octaves: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; width * height];
    if octaves == 0 {
        return out;
    }
    let mut norm = 0.0;
    for o in 0..octaves {
        let cells = 2usize << o;
        let amp = 0.5f32.powi(o as i32);
        norm += amp;
        let lattice: Vec<f32> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let at = |i: usize, j: usize| lattice[j * (cells + 1) + i];
        for y in 0..height {
            let fy = (y as f32 + 0.5) / height as f32 * cells as f32;
            let j = (fy as usize).min(cells - 1);
            let ty = smoothstep(fy - j as f32);
            for x in 0..width {
                let fx = (x as f32 + 0.5) / width as f32 * cells as f32;
                let i = (fx as usize).min(cells - 1);
                let tx = smoothstep(fx - i as f32);
                let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
                let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
                out[y * width + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Random linear ramp in `[-strength, strength]` across the image.
fn linear_gradient<R: Rng>(rng: &mut R, width: usize, height: usize, strength: f32) -> Vec<f32> {
    if strength <= 0.0 {
        return vec![0.0; width * height];
    }
    let angle = rng.gen_range(0.0..std::f32::consts::TAU);
    let mag = rng.gen_range(0.0..=strength);
    let (dx, dy) = (angle.cos() * mag, angle.sin() * mag);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = 2.0 * (y as f32 + 0.5) / height as f32 - 1.0;
        for x in 0..width {
            let u = 2.0 * (x as f32 + 0.5) / width as f32 - 1.0;
            out.push(0.5 * (dx * u + dy * v) * std::f32::consts::SQRT_2);
        }
    }
    out
}

/// Smooth positive single-channel shading clamped to the amplitude range.
pub fn gen_shading_field<R: Rng>(params: &SynthesisParams, rng: &mut R) -> ShadingMap {
    let n = params.size;
    let [lo, hi] = params.shading_amplitude;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let noise = value_noise(rng, n, n, params.shading_octaves);
    let ramp = linear_gradient(rng, n, n, params.shading_gradient);
    let data = noise
        .iter()
        .zip(&ramp)
        .map(|(a, b)| (mid + half * (a + b)).clamp(lo, hi))
        .collect();
    ShadingMap::new(n, n, 1, data).expect("amplitude range is positive")
}

/// Near-white paper tint: a per-channel base drawn from the tint range plus
/// a small low-frequency variation, clamped back into the range.
pub fn gen_material<R: Rng>(params: &SynthesisParams, rng: &mut R) -> LinearImage {
    let n = params.size;
    let (lo, hi) = (params.tint_lo, params.tint_hi);
    let base: [f32; 3] = std::array::from_fn(|c| rng.gen_range(lo[c]..=hi[c]));
    let var = params.material_variation;
    let fields: Vec<Vec<f32>> = if var > 0.0 {
        (0..3).map(|_| value_noise(rng, n, n, 1)).collect()
    } else {
        vec![vec![0.0; n * n]; 3]
    };
    LinearImage::from_fn(n, n, |x, y| {
        std::array::from_fn(|c| (base[c] + var * fields[c][y * n + x]).clamp(lo[c], hi[c]))
    })
}
