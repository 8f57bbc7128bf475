//! Central-difference checks of the reverse pass.
//!
//! Primitives are checked element by element on small random tensors: the
//! scalar probe is `Σ op(x) ⊙ r` for a fixed random `r`. The two training
//! objectives are checked through the networks along random parameter
//! directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::{smt_loss, to64, unet_forward, wbn_loss, Map};
use super::Check;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::losses::{smt_objective, wbn_objective, LossWeights};
use crate::nn::{SmtNet, UNet, WbNet};
use crate::synth::{generate, SynthesisParams};

pub const PRIMITIVE_STEP: f32 = 1e-3;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-2;
/// Step length along a unit direction in float64 parameter space.
pub const OBJECTIVE_STEP: f64 = 1e-5;
pub const OBJECTIVE_TOLERANCE: f64 = 2e-2;
pub const OBJECTIVE_SIZE: usize = 16;
pub const DIRECTIONS: usize = 10;

type OpFn = fn(&mut Tape, &[Var]) -> Result<Var>;

/// Input ranges keep kinked ops (abs, leaky ReLU, clamp) and divisions away
/// from their singular points.
enum Range {
    Signed,
    Positive,
}

struct Primitive {
    name: &'static str,
    inputs: Vec<(Vec<usize>, Range)>,
    op: OpFn,
}

fn primitives() -> Vec<Primitive> {
    use Range::*;
    let x = || (vec![2, 4, 4], Signed);
    let p = |name, inputs, op| Primitive { name, inputs, op };
    vec![
        p("conv2d", vec![x(), (vec![2, 2, 3, 3], Signed), (vec![2], Signed)], |t, v| t.conv2d(v[0], v[1], v[2])),
        p("avg_pool2", vec![x()], |t, v| t.avg_pool2(v[0])),
        p("upsample2", vec![(vec![2, 2, 2], Signed)], |t, v| t.upsample2(v[0])),
        p("concat", vec![x(), (vec![1, 4, 4], Signed)], |t, v| t.concat(v[0], v[1])),
        p("leaky_relu", vec![x()], |t, v| t.leaky_relu(v[0], 0.1)),
        p("sigmoid", vec![x()], |t, v| t.sigmoid(v[0])),
        p("softplus", vec![x()], |t, v| t.softplus(v[0])),
        p("add", vec![x(), x()], |t, v| t.add(v[0], v[1])),
        p("sub", vec![x(), x()], |t, v| t.sub(v[0], v[1])),
        p("mul", vec![x(), x()], |t, v| t.mul(v[0], v[1])),
        p("div", vec![x(), (vec![2, 4, 4], Positive)], |t, v| t.div(v[0], v[1])),
        p("scale", vec![x()], |t, v| t.scale(v[0], -1.7)),
        p("add_scalar", vec![x()], |t, v| t.add_scalar(v[0], 0.4)),
        p("abs", vec![x()], |t, v| t.abs(v[0])),
        p("clamp_min", vec![x()], |t, v| t.clamp_min(v[0], 0.0)),
        p("channel_sum", vec![x()], |t, v| t.channel_sum(v[0])),
        p("broadcast", vec![(vec![1, 4, 4], Signed)], |t, v| t.broadcast(v[0], 3)),
        p("sum", vec![x()], |t, v| t.sum(v[0])),
        p("mean", vec![x()], |t, v| t.mean(v[0])),
        p("diff_x", vec![x()], |t, v| t.diff_x(v[0])),
        p("diff_y", vec![x()], |t, v| t.diff_y(v[0])),
        p("laplacian", vec![x()], |t, v| t.laplacian(v[0])),
    ]
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], range: &Range) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| match range {
            // magnitude in [0.2, 1] with random sign
            Range::Signed => {
                let m = rng.gen_range(0.2f32..1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
            Range::Positive => rng.gen_range(0.5f32..1.5),
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are ~0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-8 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn probe_value(op: OpFn, inputs: &[Tensor], proj: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.constant(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = op(&mut tape, &vars)?;
    Ok(tape.value(out).data().iter().zip(proj.data()).map(|(a, b)| *a as f64 * *b as f64).sum())
}

fn check_primitive(p: &Primitive, rng: &mut ChaCha8Rng) -> Result<Check> {
    let inputs = p
        .inputs
        .iter()
        .map(|(shape, range)| random_tensor(rng, shape, range))
        .collect::<Result<Vec<_>>>()?;

    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.param(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = (p.op)(&mut tape, &vars)?;
    let out_shape = tape.shape(out).to_vec();
    let proj = random_tensor(rng, &out_shape, &Range::Signed)?;
    let r = tape.constant(proj.clone())?;
    let weighted = tape.mul(out, r)?;
    let total = tape.sum(weighted)?;
    let grads = tape.backward(total)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get_or_zeros(*v, inputs[k].shape());
        analytic.extend(g.data().iter().map(|x| *x as f64));
        for j in 0..inputs[k].len() {
            let mut shifted = inputs.clone();
            shifted[k].data_mut()[j] += PRIMITIVE_STEP;
            let plus = probe_value(p.op, &shifted, &proj)?;
            shifted[k].data_mut()[j] -= 2.0 * PRIMITIVE_STEP;
            let minus = probe_value(p.op, &shifted, &proj)?;
            numeric.push((plus - minus) / (2.0 * PRIMITIVE_STEP as f64));
        }
    }
    Ok(Check::at_most("primitive", p.name, relative_error(&analytic, &numeric), PRIMITIVE_TOLERANCE))
}

/// Every tape primitive, one check each.
pub fn check_primitives(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    primitives().iter().map(|p| check_primitive(p, &mut rng)).collect()
}

type LossFn<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;
type ReferenceFn<'a> = dyn Fn(&[Map]) -> f64 + 'a;

/// Directional-derivative checks with respect to all of `net`'s
/// parameters. The analytic side differentiates `loss` on the f32 tape; the
/// numeric side differences a float64 forward pass of the same architecture
/// followed by the float64 `reference` loss on its outputs.
fn check_directions(
    suite_name: &str,
    net: &UNet,
    input: &Tensor,
    loss: &LossFn,
    reference: &ReferenceFn,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Check>> {
    let params = net.params().tensors().to_vec();
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape)?;
    let out = loss(&mut tape, &bound)?;
    let grads = tape.backward(out)?;
    let grads: Vec<Vec<f64>> = bound.iter().zip(&params).map(|(v, p)| to64(&grads.get_or_zeros(*v, p.shape()))).collect();
    let theta: Vec<Vec<f64>> = params.iter().map(to64).collect();
    let input = Map::from_tensor(input);

    let mut checks = Vec::with_capacity(DIRECTIONS);
    for d in 0..DIRECTIONS {
        let mut dir: Vec<Vec<f64>> = theta.iter().map(|p| (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        // unit length, so OBJECTIVE_STEP is the step size in parameter space
        let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().flatten().for_each(|v| *v /= norm);
        let analytic: f64 = grads.iter().zip(&dir).map(|(g, u)| g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()).sum();
        let at = |sign: f64| {
            let shifted: Vec<Vec<f64>> = theta
                .iter()
                .zip(&dir)
                .map(|(p, u)| p.iter().zip(u).map(|(x, y)| x + sign * OBJECTIVE_STEP * y).collect())
                .collect();
            reference(&unet_forward(net, &shifted, &input))
        };
        let numeric = (at(1.0) - at(-1.0)) / (2.0 * OBJECTIVE_STEP);
        checks.push(Check::at_most(
            "objective",
            format!("{suite_name}/direction_{d}"),
            relative_error(&[analytic], &[numeric]),
            OBJECTIVE_TOLERANCE,
        ));
    }
    Ok(checks)
}

/// The white-balance and separation objectives composed with their
/// networks, on a 16×16 synthetic sample.
pub fn check_objectives(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SynthesisParams {
        size: OBJECTIVE_SIZE,
        seed,
        ..SynthesisParams::default()
    };
    let s = generate(&params, None, 0)?;
    let w = LossWeights::default();

    let wb = WbNet::new(3, 8, seed)?;
    let image = Tensor::from_raster(&s.input);
    let kernel_gt = Tensor::from_raster(&s.kernel_gt);
    let wb_gt = Tensor::from_raster(&s.wb_gt);
    let mask = Tensor::from_mask(&s.mask, 3);
    let wb_loss = |tape: &mut Tape, bound: &[Var]| -> Result<Var> {
        let i = tape.constant(image.clone())?;
        let k = tape.constant(kernel_gt.clone())?;
        let g = tape.constant(wb_gt.clone())?;
        let m = tape.constant(mask.clone())?;
        let kh = wb.forward(tape, i, bound)?;
        Ok(wbn_objective(tape, i, kh, k, g, m, &w)?.total)
    };
    let (image64, kernel64, wb64, mask64) = (to64(&image), to64(&kernel_gt), to64(&wb_gt), to64(&mask));
    let wb_reference = |outs: &[Map]| wbn_loss(&image64, &outs[0].data, &kernel64, &wb64, &mask64, &w);
    let mut checks = check_directions("white_balance", &wb.0, &image, &wb_loss, &wb_reference, &mut rng)?;

    let smt = SmtNet::new(3, 8, seed.wrapping_add(1))?;
    let texture = Tensor::from_raster(&s.texture);
    let smt_tape_loss = |tape: &mut Tape, bound: &[Var]| -> Result<Var> {
        let i = tape.constant(wb_gt.clone())?;
        let t = tape.constant(texture.clone())?;
        let (m, l) = smt.forward(tape, i, bound)?;
        Ok(smt_objective(tape, i, t, m, l, &w)?.0.total)
    };
    let texture64 = to64(&texture);
    let smt_reference = |outs: &[Map]| smt_loss(&wb64, &texture64, &outs[0].data, &outs[1].data, OBJECTIVE_SIZE, &w);
    checks.extend(check_directions("separation", &smt.0, &wb_gt, &smt_tape_loss, &smt_reference, &mut rng)?);
    Ok(checks)
}

/// Each separator output must be independent of the other head's decoder:
/// the gradient of the output with respect to those parameters is exactly 0.
pub fn check_isolation(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = SmtNet::new(3, 8, seed)?;
    let x = random_tensor(&mut rng, &[3, OBJECTIVE_SIZE, OBJECTIVE_SIZE], &Range::Positive)?;
    let mut checks = Vec::new();
    for (head, other, name) in [
        (1usize, net.material_decoder_params(), "shading_vs_material_decoder"),
        (0usize, net.shading_decoder_params(), "material_vs_shading_decoder"),
    ] {
        let mut tape = Tape::new();
        let bound = net.0.bind(&mut tape)?;
        let input = tape.constant(x.clone())?;
        let outs = net.0.forward(&mut tape, input, &bound)?;
        let total = tape.sum(outs[head])?;
        let grads = tape.backward(total)?;
        let leak: f64 = other
            .iter()
            .filter_map(|&i| grads.get(bound[i]))
            .flat_map(|g| g.data().iter())
            .map(|v| v.abs() as f64)
            .sum();
        checks.push(Check::flag("isolation", name, leak == 0.0));
    }
    Ok(checks)
}

/// The full suite.
pub fn run(seed: u64) -> Result<super::Report> {
    let mut checks = check_primitives(seed)?;
    checks.extend(check_objectives(seed)?);
    checks.extend(check_isolation(seed)?);
    Ok(super::Report { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes() {
        for seed in [0, 1] {
            for c in check_primitives(seed).unwrap() {
                assert!(c.passed, "{c}");
            }
        }
    }

    #[test]
    fn composed_objectives_pass() {
        let checks = check_objectives(3).unwrap();
        assert_eq!(checks.len(), 2 * DIRECTIONS);
        for c in checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn decoders_are_isolated() {
        assert!(check_isolation(0).unwrap().iter().all(|c| c.passed));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // sin has derivative cos; claiming a constant gradient must fail.
        let analytic = [1.0, 1.0, 1.0];
        let numeric = [0.5f64.cos(), 1.0f64.cos(), 1.5f64.cos()];
        assert!(relative_error(&analytic, &numeric) > PRIMITIVE_TOLERANCE);
        assert!(relative_error(&numeric, &numeric) == 0.0);
    }
}
