//! Training objectives for both stages.
//!
//! White balancing: `L_wbn = L_wb + α1·L_ch + α2·L_int`, the masked L1 on
//! the kernel, the masked L1 on chromaticity of the corrected image and the
//! L1 on its per-pixel intensity.
//!
//! Separation: `L_smt = L_cc + β1·L_sc + β2·L_r + β3·‖∇²λ_p‖ + β4·‖∇M‖`,
//! i.e. chromatic consistency between the white-balanced input and the
//! predicted reflectance, consistency between predicted and estimated
//! shading, reconstruction of the white-balanced input, and smoothness of
//! shading (5-point Laplacian) and material (forward differences).
//!
//! Every reduction is a mean, so losses do not depend on resolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Mask, ShadingMap, WBKernel, DIV_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha1: f32,
    pub alpha2: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub beta3: f32,
    pub beta4: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.5,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 0.1,
            beta4: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.beta1, self.beta2, self.beta3, self.beta4];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidValue(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Weighted total plus the unweighted value of every term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
}

impl LossReport {
    /// Builds a report from `(name, value, weight)`; the total is the
    /// weighted sum.
    pub fn from_terms(terms: &[(&str, f64, f64)]) -> Self {
        Self {
            total: terms.iter().map(|(_, v, w)| v * w).sum(),
            terms: terms.iter().map(|(n, v, _)| (n.to_string(), *v)).collect(),
        }
    }

    pub fn term(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let total = reports.iter().map(|r| r.total).sum::<f64>() / n;
        let terms = first
            .terms
            .keys()
            .map(|k| (k.clone(), reports.iter().map(|r| r.term(k)).sum::<f64>() / n))
            .collect();
        Some(LossReport { total, terms })
    }
}

/// Mean of `|a − b|` over elements where `mask` (same shape, 0/1) is set;
/// zero when the mask is empty. `None` means every element counts.
pub fn masked_l1(tape: &mut Tape, a: Var, b: Var, mask: Option<Var>) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let d = tape.abs(d)?;
    match mask {
        None => tape.mean(d),
        Some(m) => {
            if tape.shape(m) != tape.shape(d) {
                return Err(Error::shape(format!("mask {:?}", tape.shape(d)), format!("{:?}", tape.shape(m))));
            }
            let count: f64 = tape.value(m).data().iter().map(|v| *v as f64).sum();
            if count == 0.0 {
                return tape.constant(Tensor::scalar(0.0));
            }
            let md = tape.mul(d, m)?;
            let s = tape.sum(md)?;
            tape.scale(s, (1.0 / count) as f32)
        }
    }
}

/// Differentiable chromaticity `x / max(Σ_c x, eps)`.
pub fn chromaticity(tape: &mut Tape, x: Var, eps: f32) -> Result<Var> {
    let (c, _, _) = tape.value(x).chw()?;
    let s = tape.channel_sum(x)?;
    let s = tape.clamp_min(s, eps)?;
    let s = tape.broadcast(s, c)?;
    tape.div(x, s)
}

fn require_3x3(tape: &Tape, field: Var) -> Result<()> {
    let (_, h, w) = tape.value(field).chw()?;
    if h < 3 || w < 3 {
        return Err(Error::TooSmall(format!("smoothness terms need at least 3x3, got {h}x{w}")));
    }
    Ok(())
}

/// Mean absolute forward difference over both axes.
pub fn spatial_grad_l1(tape: &mut Tape, field: Var) -> Result<Var> {
    require_3x3(tape, field)?;
    let dx = tape.diff_x(field)?;
    let dx = tape.abs(dx)?;
    let dy = tape.diff_y(field)?;
    let dy = tape.abs(dy)?;
    let (nx, ny) = (tape.value(dx).len(), tape.value(dy).len());
    let sx = tape.sum(dx)?;
    let sy = tape.sum(dy)?;
    let s = tape.add(sx, sy)?;
    tape.scale(s, 1.0 / (nx + ny) as f32)
}

/// Mean absolute 5-point Laplacian over interior pixels.
pub fn laplacian_l1(tape: &mut Tape, field: Var) -> Result<Var> {
    require_3x3(tape, field)?;
    let l = tape.laplacian(field)?;
    let l = tape.abs(l)?;
    tape.mean(l)
}

fn weighted_sum(tape: &mut Tape, first: Var, rest: &[(Var, f32)]) -> Result<Var> {
    let mut total = first;
    for (v, w) in rest {
        let s = tape.scale(*v, *w)?;
        total = tape.add(total, s)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct WbnTerms {
    pub kernel: Var,
    pub chroma: Var,
    pub intensity: Var,
    pub total: Var,
}

impl WbnTerms {
    pub fn report(&self, tape: &Tape, w: &LossWeights) -> LossReport {
        let v = |x: Var| tape.value(x).item() as f64;
        LossReport::from_terms(&[
            ("wb", v(self.kernel), 1.0),
            ("ch", v(self.chroma), w.alpha1 as f64),
            ("int", v(self.intensity), w.alpha2 as f64),
        ])
    }
}

/// White-balance loss from its already-derived operands. `mask` (3-channel,
/// 0/1) applies to the kernel and chromaticity terms only.
#[allow(clippy::too_many_arguments)]
pub fn loss_wbn(
    tape: &mut Tape,
    wb_hat: Var,
    wb_gt: Var,
    cwb_hat: Var,
    cwb_gt: Var,
    in_hat: Var,
    in_gt: Var,
    mask: Option<Var>,
    w: &LossWeights,
) -> Result<WbnTerms> {
    let kernel = masked_l1(tape, wb_hat, wb_gt, mask)?;
    let chroma = masked_l1(tape, cwb_hat, cwb_gt, mask)?;
    let intensity = masked_l1(tape, in_hat, in_gt, None)?;
    let total = weighted_sum(tape, kernel, &[(chroma, w.alpha1), (intensity, w.alpha2)])?;
    Ok(WbnTerms {
        kernel,
        chroma,
        intensity,
        total,
    })
}

/// Full white-balance objective for a predicted kernel: applies it to
/// `image` and derives chromaticity and intensity on both sides.
pub fn wbn_objective(
    tape: &mut Tape,
    image: Var,
    kernel_hat: Var,
    kernel_gt: Var,
    wb_gt: Var,
    mask: Var,
    w: &LossWeights,
) -> Result<WbnTerms> {
    let iwb_hat = tape.mul(kernel_hat, image)?;
    let c_hat = chromaticity(tape, iwb_hat, DIV_EPS)?;
    let c_gt = chromaticity(tape, wb_gt, DIV_EPS)?;
    let in_hat = tape.channel_sum(iwb_hat)?;
    let in_gt = tape.channel_sum(wb_gt)?;
    loss_wbn(tape, kernel_hat, kernel_gt, c_hat, c_gt, in_hat, in_gt, Some(mask), w)
}

#[derive(Debug, Clone, Copy)]
pub struct SmtTerms {
    pub chroma: Var,
    pub shading: Var,
    pub recon: Var,
    pub laplacian: Var,
    pub gradient: Var,
    pub total: Var,
}

impl SmtTerms {
    pub fn report(&self, tape: &Tape, w: &LossWeights) -> LossReport {
        let v = |x: Var| tape.value(x).item() as f64;
        LossReport::from_terms(&[
            ("cc", v(self.chroma), 1.0),
            ("sc", v(self.shading), w.beta1 as f64),
            ("r", v(self.recon), w.beta2 as f64),
            ("lap", v(self.laplacian), w.beta3 as f64),
            ("grad", v(self.gradient), w.beta4 as f64),
        ])
    }
}

/// Separation loss from its already-derived operands.
#[allow(clippy::too_many_arguments)]
pub fn loss_smt(
    tape: &mut Tape,
    cwb_hat: Var,
    cr_hat: Var,
    lambda_p: Var,
    lambda_e: Var,
    iwb_recon: Var,
    iwb_in: Var,
    m_hat: Var,
    w: &LossWeights,
) -> Result<SmtTerms> {
    for (what, v) in [("predicted shading", lambda_p), ("estimated shading", lambda_e)] {
        if tape.value(v).chw()?.0 != 1 {
            return Err(Error::shape(format!("1-channel {what}"), format!("{:?}", tape.shape(v))));
        }
    }
    let chroma = masked_l1(tape, cwb_hat, cr_hat, None)?;
    let shading = masked_l1(tape, lambda_p, lambda_e, None)?;
    let recon = masked_l1(tape, iwb_recon, iwb_in, None)?;
    let laplacian = laplacian_l1(tape, lambda_p)?;
    let gradient = spatial_grad_l1(tape, m_hat)?;
    let total = weighted_sum(
        tape,
        chroma,
        &[(shading, w.beta1), (recon, w.beta2), (laplacian, w.beta3), (gradient, w.beta4)],
    )?;
    Ok(SmtTerms {
        chroma,
        shading,
        recon,
        laplacian,
        gradient,
        total,
    })
}

/// Quantities derived from a material prediction.
#[derive(Debug, Clone, Copy)]
pub struct SmtDerived {
    /// `R̂ = M̂ ⊗ T`
    pub reflectance: Var,
    /// `λ̂_e = Σ_c I_wb / max(Σ_c R̂, ε)`
    pub shading_estimated: Var,
    /// `M̂ ⊗ T ⊗ λ̂_p`
    pub reconstruction: Var,
}

/// Full separation objective. `texture` enters as data; only `m_hat` and
/// `lambda_p` carry parameters.
pub fn smt_objective(
    tape: &mut Tape,
    iwb: Var,
    texture: Var,
    m_hat: Var,
    lambda_p: Var,
    w: &LossWeights,
) -> Result<(SmtTerms, SmtDerived)> {
    let reflectance = tape.mul(m_hat, texture)?;
    let cwb = chromaticity(tape, iwb, DIV_EPS)?;
    let cr = chromaticity(tape, reflectance, DIV_EPS)?;
    let num = tape.channel_sum(iwb)?;
    let den = tape.channel_sum(reflectance)?;
    let den = tape.clamp_min(den, DIV_EPS)?;
    let shading_estimated = tape.div(num, den)?;
    let lp3 = tape.broadcast(lambda_p, 3)?;
    let reconstruction = tape.mul(reflectance, lp3)?;
    let terms = loss_smt(tape, cwb, cr, lambda_p, shading_estimated, reconstruction, iwb, m_hat, w)?;
    Ok((
        terms,
        SmtDerived {
            reflectance,
            shading_estimated,
            reconstruction,
        },
    ))
}

/// Gradient-free white-balance loss on rasters.
pub fn evaluate_wbn(
    image: &LinearImage,
    kernel_hat: &WBKernel,
    kernel_gt: &WBKernel,
    wb_gt: &LinearImage,
    mask: &Mask,
    w: &LossWeights,
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::from_raster(image))?;
    let kh = tape.constant(Tensor::from_raster(kernel_hat))?;
    let kg = tape.constant(Tensor::from_raster(kernel_gt))?;
    let g = tape.constant(Tensor::from_raster(wb_gt))?;
    let m = tape.constant(Tensor::from_mask(mask, 3))?;
    let terms = wbn_objective(&mut tape, i, kh, kg, g, m, w)?;
    Ok(terms.report(&tape, w))
}

/// Gradient-free separation loss on rasters.
pub fn evaluate_smt(
    iwb: &LinearImage,
    texture: &LinearImage,
    material: &LinearImage,
    shading: &ShadingMap,
    w: &LossWeights,
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::from_raster(iwb))?;
    let t = tape.constant(Tensor::from_raster(texture))?;
    let m = tape.constant(Tensor::from_raster(material))?;
    let s = tape.constant(Tensor::from_raster(shading))?;
    let (terms, _) = smt_objective(&mut tape, i, t, m, s, w)?;
    Ok(terms.report(&tape, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    fn scalar(tape: &Tape, v: Var) -> f64 {
        tape.value(v).item() as f64
    }

    #[test]
    fn masked_l1_cases() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap()).unwrap();
        let b = tape.constant(Tensor::zeros(&[1, 1, 2])).unwrap();
        let m = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
        let l = masked_l1(&mut tape, a, b, Some(m)).unwrap();
        assert_eq!(scalar(&tape, l), 1.0);

        let none = tape.constant(Tensor::zeros(&[1, 1, 2])).unwrap();
        let l = masked_l1(&mut tape, a, b, Some(none)).unwrap();
        assert_eq!(scalar(&tape, l), 0.0);

        let l = masked_l1(&mut tape, a, a, None).unwrap();
        assert_eq!(scalar(&tape, l), 0.0);

        let bad = tape.constant(Tensor::zeros(&[1, 1, 3])).unwrap();
        assert!(matches!(masked_l1(&mut tape, a, bad, None), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn smoothness_terms_on_simple_fields() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::full(&[1, 4, 5], 0.7)).unwrap();
        let g = spatial_grad_l1(&mut tape, c).unwrap();
        let l = laplacian_l1(&mut tape, c).unwrap();
        assert_eq!((scalar(&tape, g), scalar(&tape, l)), (0.0, 0.0));

        let ramp = Tensor::new(vec![1, 4, 5], (0..20).map(|i| 0.5 + 0.1 * (i % 5) as f32).collect()).unwrap();
        let r = tape.constant(ramp).unwrap();
        let g = spatial_grad_l1(&mut tape, r).unwrap();
        let l = laplacian_l1(&mut tape, r).unwrap();
        assert!(scalar(&tape, g) > 0.0);
        assert!(scalar(&tape, l).abs() < 1e-6);

        let small = tape.constant(Tensor::zeros(&[1, 2, 5])).unwrap();
        assert!(matches!(laplacian_l1(&mut tape, small), Err(Error::TooSmall(_))));
        assert!(matches!(spatial_grad_l1(&mut tape, small), Err(Error::TooSmall(_))));
    }

    /// Naive scalar loops for the smoothness terms.
    fn naive_grad_l1(f: &[f32], c: usize, h: usize, w: usize) -> f64 {
        let (mut s, mut n) = (0.0f64, 0usize);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = f[(ch * h + y) * w + x] as f64;
                    if x + 1 < w {
                        s += (f[(ch * h + y) * w + x + 1] as f64 - v).abs();
                        n += 1;
                    }
                    if y + 1 < h {
                        s += (f[(ch * h + y + 1) * w + x] as f64 - v).abs();
                        n += 1;
                    }
                }
            }
        }
        s / n as f64
    }

    fn naive_laplacian_l1(f: &[f32], h: usize, w: usize) -> f64 {
        let at = |y: usize, x: usize| f[y * w + x] as f64;
        let mut s = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                s += (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x)).abs();
            }
        }
        s / ((h - 2) * (w - 2)) as f64
    }

    #[test]
    fn smoothness_terms_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = tensor(&mut rng, &[1, 5, 5], 0.0, 1.0);
        let m = tensor(&mut rng, &[3, 5, 5], 0.0, 1.0);
        let mut tape = Tape::new();
        let fv = tape.constant(f.clone()).unwrap();
        let mv = tape.constant(m.clone()).unwrap();
        let l = laplacian_l1(&mut tape, fv).unwrap();
        let g = spatial_grad_l1(&mut tape, mv).unwrap();
        assert!((scalar(&tape, l) - naive_laplacian_l1(f.data(), 5, 5)).abs() < 1e-5);
        assert!((scalar(&tape, g) - naive_grad_l1(m.data(), 3, 5, 5)).abs() < 1e-5);
    }

    /// Scalar-loop version of the white-balance objective.
    fn naive_wbn(i: &[f32], kh: &[f32], kg: &[f32], g: &[f32], mask: &[f32], hw: usize, w: &LossWeights) -> [f64; 4] {
        let chroma = |img: &[f64], p: usize| {
            let s = (img[p] + img[hw + p] + img[2 * hw + p]).max(DIV_EPS as f64);
            [img[p] / s, img[hw + p] / s, img[2 * hw + p] / s]
        };
        let iwb: Vec<f64> = (0..3 * hw).map(|j| kh[j] as f64 * i[j] as f64).collect();
        let gd: Vec<f64> = g.iter().map(|v| *v as f64).collect();
        let (mut lwb, mut lch, mut lint, mut count) = (0.0, 0.0, 0.0, 0.0);
        for p in 0..hw {
            let (ch, cg) = (chroma(&iwb, p), chroma(&gd, p));
            for c in 0..3 {
                let m = mask[c * hw + p] as f64;
                lwb += m * (kh[c * hw + p] as f64 - kg[c * hw + p] as f64).abs();
                lch += m * (ch[c] - cg[c]).abs();
                count += m;
            }
            let ih = iwb[p] + iwb[hw + p] + iwb[2 * hw + p];
            let ig = gd[p] + gd[hw + p] + gd[2 * hw + p];
            lint += (ih - ig).abs();
        }
        let (lwb, lch, lint) = (lwb / count, lch / count, lint / hw as f64);
        [lwb, lch, lint, lwb + w.alpha1 as f64 * lch + w.alpha2 as f64 * lint]
    }

    #[test]
    fn wbn_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = [3, 4, 4];
        let i = tensor(&mut rng, &shape, 0.05, 1.0);
        let kh = tensor(&mut rng, &shape, 0.5, 2.0);
        let kg = tensor(&mut rng, &shape, 0.5, 2.0);
        let g = tensor(&mut rng, &shape, 0.05, 1.0);
        let plane: Vec<f32> = (0..16).map(|_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 }).collect();
        let mask = Tensor::new(shape.to_vec(), plane.repeat(3)).unwrap();
        let w = LossWeights { alpha1: 0.7, alpha2: 0.3, ..Default::default() };

        let mut tape = Tape::new();
        let vars: Vec<Var> = [&i, &kh, &kg, &g, &mask].iter().map(|t| tape.constant((*t).clone()).unwrap()).collect();
        let terms = wbn_objective(&mut tape, vars[0], vars[1], vars[2], vars[3], vars[4], &w).unwrap();
        let want = naive_wbn(i.data(), kh.data(), kg.data(), g.data(), mask.data(), 16, &w);
        let got = [terms.kernel, terms.chroma, terms.intensity, terms.total].map(|v| scalar(&tape, v));
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-5, "{got:?} vs {want:?}");
        }
        let report = terms.report(&tape, &w);
        let recomputed = report.term("wb") + 0.7 * report.term("ch") + 0.3 * report.term("int");
        assert!((report.total - recomputed).abs() < 1e-6);
    }

    #[test]
    fn wbn_zero_at_ground_truth_and_weight_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = LinearImage::from_fn(6, 6, |_, _| [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)]);
        let k = WBKernel::from_image(&LinearImage::from_fn(6, 6, |_, _| [rng.gen_range(0.5..2.0), 1.0, rng.gen_range(0.5..2.0)]));
        let wb = crate::imaging::apply_wb(&k, &img).unwrap();
        let mask = Mask::full(6, 6);
        let r = evaluate_wbn(&img, &k, &k, &wb, &mask, &LossWeights::default()).unwrap();
        assert!(r.total.abs() < 1e-6, "{r:?}");

        let off = WBKernel::constant(6, 6, [1.0; 3]);
        let base = LossWeights { alpha1: 1.0, alpha2: 0.5, ..Default::default() };
        let doubled = LossWeights { alpha1: 2.0, ..base };
        let zeroed = LossWeights { alpha1: 0.0, alpha2: 0.0, ..base };
        let r1 = evaluate_wbn(&img, &off, &k, &wb, &mask, &base).unwrap();
        let r2 = evaluate_wbn(&img, &off, &k, &wb, &mask, &doubled).unwrap();
        let r0 = evaluate_wbn(&img, &off, &k, &wb, &mask, &zeroed).unwrap();
        assert!((r2.total - r1.total - r1.term("ch")).abs() < 1e-6);
        assert!((r0.total - r1.term("wb")).abs() < 1e-7);
    }

    #[test]
    fn smt_zero_at_perfect_decomposition() {
        let (w, h) = (8, 8);
        let m = LinearImage::from_fn(w, h, |_, _| [0.95, 0.93, 0.9]);
        let t = LinearImage::from_fn(w, h, |x, y| if (x + y) % 3 == 0 { [0.1, 0.1, 0.15] } else { [0.9; 3] });
        // affine shading: zero Laplacian
        let lam = ShadingMap::new(w, h, 1, (0..w * h).map(|i| 0.5 + 0.02 * (i % w) as f32 + 0.01 * (i / w) as f32).collect()).unwrap();
        let iwb = crate::imaging::hadamard(&crate::imaging::hadamard(&m, &t).unwrap(), &lam).unwrap();
        let r = evaluate_smt(&iwb, &t, &m, &lam, &LossWeights::default()).unwrap();
        for term in ["cc", "sc", "r", "lap", "grad"] {
            assert!(r.term(term).abs() < 1e-5, "{term}: {r:?}");
        }
    }

    #[test]
    fn smt_smoothness_equals_ground_truth_roughness() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (w, h) = (6, 6);
        let m = LinearImage::from_fn(w, h, |_, _| [rng.gen_range(0.8..1.0), rng.gen_range(0.8..1.0), rng.gen_range(0.8..1.0)]);
        let t = LinearImage::from_fn(w, h, |_, _| [rng.gen_range(0.1..1.0); 3]);
        let lam = ShadingMap::new(w, h, 1, (0..w * h).map(|_| rng.gen_range(0.4..1.2)).collect()).unwrap();
        let iwb = crate::imaging::hadamard(&crate::imaging::hadamard(&m, &t).unwrap(), &lam).unwrap();
        let r = evaluate_smt(&iwb, &t, &m, &lam, &LossWeights::default()).unwrap();
        for term in ["cc", "sc", "r"] {
            assert!(r.term(term).abs() < 1e-5, "{term}: {r:?}");
        }
        let mt = Tensor::from_raster(&m);
        let lt = Tensor::from_raster(&lam);
        assert!((r.term("grad") - naive_grad_l1(mt.data(), 3, h, w)).abs() < 1e-5);
        assert!((r.term("lap") - naive_laplacian_l1(lt.data(), h, w)).abs() < 1e-5);
    }

    #[test]
    fn smt_rejects_multichannel_shading() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[3, 4, 4], 0.5)).unwrap();
        assert!(loss_smt(&mut tape, x, x, x, x, x, x, x, &LossWeights::default()).is_err());
    }

    #[test]
    fn texture_receives_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let iwb = tape.constant(tensor(&mut rng, &[3, 4, 4], 0.1, 1.0)).unwrap();
        let t = tape.constant(tensor(&mut rng, &[3, 4, 4], 0.1, 1.0)).unwrap();
        let m = tape.param(tensor(&mut rng, &[3, 4, 4], 0.5, 1.0)).unwrap();
        let l = tape.param(tensor(&mut rng, &[1, 4, 4], 0.5, 1.0)).unwrap();
        let (terms, _) = smt_objective(&mut tape, iwb, t, m, l, &LossWeights::default()).unwrap();
        let g = tape.backward(terms.total).unwrap();
        assert!(g.get(t).is_none());
        assert!(g.get(iwb).is_none());
        assert!(g.get(m).is_some() && g.get(l).is_some());
    }

    #[test]
    fn batch_mean_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reports: Vec<LossReport> = (0..9)
            .map(|_| LossReport::from_terms(&[("a", rng.gen_range(0.0..2.0), 1.0), ("b", rng.gen_range(0.0..1.0), 0.5)]))
            .collect();
        let mut shuffled = reports.clone();
        shuffled.reverse();
        shuffled.swap(1, 4);
        let (a, b) = (LossReport::mean(&reports).unwrap(), LossReport::mean(&shuffled).unwrap());
        assert!((a.total - b.total).abs() < 1e-6);
    }
}
