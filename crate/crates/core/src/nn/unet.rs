//! U-Net encoder/decoder with skip connections and one decoder per head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, NetConfig};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f32 = 0.1;

/// Named parameter tensors in a fixed, config-derived order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }
}

/// One conv layer: indices of its weight and bias in [`Params`].
#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Layer>,
    bottleneck: Layer,
    /// Per head, decoder layers ordered from the deepest level up.
    decoders: Vec<Vec<Layer>>,
    outputs: Vec<Layer>,
}

/// `(name, shape, fan_in)` for every parameter, in storage order.
fn param_specs(cfg: &NetConfig) -> Vec<(String, Vec<usize>, usize)> {
    let k = cfg.kernel;
    let mut specs = Vec::new();
    let mut conv = |name: String, co: usize, ci: usize| {
        specs.push((format!("{name}.w"), vec![co, ci, k, k], ci * k * k));
        specs.push((format!("{name}.b"), vec![co], ci * k * k));
    };
    let mut prev = cfg.in_channels;
    for lvl in 0..cfg.depth {
        let c = cfg.level_channels(lvl);
        conv(format!("enc{lvl}"), c, prev);
        prev = c;
    }
    conv("mid".into(), cfg.level_channels(cfg.depth), prev);
    for head in &cfg.heads {
        let mut below = cfg.level_channels(cfg.depth);
        for lvl in (0..cfg.depth).rev() {
            let c = cfg.level_channels(lvl);
            conv(format!("dec_{}{lvl}", head.name), c, below + c);
            below = c;
        }
        conv(format!("out_{}", head.name), head.channels, below);
    }
    specs
}

fn layout(cfg: &NetConfig) -> Layout {
    let mut next = 0;
    let mut layer = || {
        let l = Layer { w: next, b: next + 1 };
        next += 2;
        l
    };
    let encoder = (0..cfg.depth).map(|_| layer()).collect();
    let bottleneck = layer();
    let mut decoders = Vec::new();
    let mut outputs = Vec::new();
    for _ in &cfg.heads {
        decoders.push((0..cfg.depth).map(|_| layer()).collect());
        outputs.push(layer());
    }
    Layout {
        encoder,
        bottleneck,
        decoders,
        outputs,
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    config: NetConfig,
    params: Params,
    layout: Layout,
}

impl UNet {
    /// Fan-in scaled uniform initialisation; biases start at zero.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out_prefix = "out_";
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape, fan_in) in param_specs(&config) {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                let gain = if name.starts_with(out_prefix) {
                    3.0
                } else {
                    6.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)
                };
                let bound = (gain / fan_in as f32).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(shape, data)?
            };
            names.push(name);
            tensors.push(t);
        }
        let layout = layout(&config);
        Ok(Self {
            config,
            params: Params { names, tensors },
            layout,
        })
    }

    /// Rebuilds a network from stored tensors; names and shapes must match
    /// what `config` implies.
    pub fn from_named(config: NetConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != named.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for ((name, shape, _), (got_name, t)) in specs.into_iter().zip(named) {
            if name != got_name || shape != t.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "expected {name} {shape:?}, found {got_name} {:?}",
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        let layout = layout(&config);
        Ok(Self {
            config,
            params: Params { names, tensors },
            layout,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Registers every parameter as a gradient-receiving leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Registers every parameter as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    fn check_input(&self, tape: &Tape, input: Var) -> Result<()> {
        let (c, h, w) = tape.value(input).chw()?;
        let m = self.config.size_multiple();
        if c != self.config.in_channels || h % m != 0 || w % m != 0 {
            return Err(Error::shape(
                format!("[{}, H, W] with H, W divisible by {m}", self.config.in_channels),
                format!("{:?}", tape.shape(input)),
            ));
        }
        Ok(())
    }

    fn conv_act(&self, tape: &mut Tape, x: Var, layer: Layer, bound: &[Var]) -> Result<Var> {
        let y = tape.conv2d(x, bound[layer.w], bound[layer.b])?;
        tape.leaky_relu(y, LEAKY_SLOPE)
    }

    /// Forward pass with parameters already bound to `tape`. Returns one
    /// output per head, in head order.
    pub fn forward(&self, tape: &mut Tape, input: Var, bound: &[Var]) -> Result<Vec<Var>> {
        self.check_input(tape, input)?;
        if bound.len() != self.params.len() {
            return Err(Error::CountMismatch {
                expected: self.params.len(),
                found: bound.len(),
            });
        }
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut x = input;
        for layer in &self.layout.encoder {
            let e = self.conv_act(tape, x, *layer, bound)?;
            skips.push(e);
            x = tape.avg_pool2(e)?;
        }
        let mid = self.conv_act(tape, x, self.layout.bottleneck, bound)?;

        let mut outputs = Vec::with_capacity(self.config.heads.len());
        for ((head, dec), out) in self.config.heads.iter().zip(&self.layout.decoders).zip(&self.layout.outputs) {
            let mut y = mid;
            for (layer, skip) in dec.iter().zip(skips.iter().rev()) {
                let up = tape.upsample2(y)?;
                let cat = tape.concat(up, *skip)?;
                y = self.conv_act(tape, cat, *layer, bound)?;
            }
            let z = tape.conv2d(y, bound[out.w], bound[out.b])?;
            let z = match head.activation {
                Activation::Identity => z,
                Activation::Sigmoid => tape.sigmoid(z)?,
                Activation::Softplus => tape.softplus(z)?,
            };
            outputs.push(z);
        }
        Ok(outputs)
    }

    /// Gradient-free evaluation on a private tape.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape)?;
        let x = tape.constant(input.clone())?;
        let outs = self.forward(&mut tape, x, &bound)?;
        Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Indices of the parameters that belong only to head `h`'s decoder.
    pub fn decoder_param_indices(&self, h: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.layout.decoders[h].iter().flat_map(|l| [l.w, l.b]).collect();
        idx.extend([self.layout.outputs[h].w, self.layout.outputs[h].b]);
        idx
    }
}

/// White-balance network: image in, per-pixel RGB kernel out.
#[derive(Debug, Clone)]
pub struct WbNet(pub UNet);

impl WbNet {
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self> {
        UNet::new(NetConfig::wbnet(depth, width), seed).map(Self)
    }

    pub fn from_unet(net: UNet) -> Result<Self> {
        let cfg = net.config();
        if cfg.decoders() != 1 || cfg.heads[0].channels != 3 || cfg.in_channels != 3 {
            return Err(Error::CheckpointMismatch(format!(
                "not a white-balance network: {cfg:?}"
            )));
        }
        Ok(Self(net))
    }

    pub fn forward(&self, tape: &mut Tape, image: Var, bound: &[Var]) -> Result<Var> {
        Ok(self.0.forward(tape, image, bound)?[0])
    }
}

/// Shared-encoder, two-decoder network: white-balanced image in, material
/// (RGB) and shading (1 channel) out.
#[derive(Debug, Clone)]
pub struct SmtNet(pub UNet);

impl SmtNet {
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self> {
        UNet::new(NetConfig::smtnet(depth, width), seed).map(Self)
    }

    pub fn from_unet(net: UNet) -> Result<Self> {
        let cfg = net.config();
        if cfg.decoders() != 2
            || cfg.heads[0].channels != 3
            || cfg.heads[1].channels != 1
            || cfg.in_channels != 3
        {
            return Err(Error::CheckpointMismatch(format!(
                "not a material/shading network: {cfg:?}"
            )));
        }
        Ok(Self(net))
    }

    /// Returns `(material, shading)`.
    pub fn forward(&self, tape: &mut Tape, image: Var, bound: &[Var]) -> Result<(Var, Var)> {
        let outs = self.0.forward(tape, image, bound)?;
        Ok((outs[0], outs[1]))
    }

    pub fn material_decoder_params(&self) -> Vec<usize> {
        self.0.decoder_param_indices(0)
    }

    pub fn shading_decoder_params(&self) -> Vec<usize> {
        self.0.decoder_param_indices(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(seed: u64, size: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::new(vec![3, size, size], data).unwrap()
    }

    #[test]
    fn default_capacity_is_toy_scale() {
        let net = WbNet::new(3, 8, 0).unwrap();
        let n = net.0.params().scalar_count();
        assert!((30_000..80_000).contains(&n), "{n}");
    }

    #[test]
    fn wbnet_output_shape_and_positivity() {
        let net = WbNet::new(3, 4, 1).unwrap();
        let out = net.0.predict(&input(2, 16)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].shape(), &[3, 16, 16]);
        assert!(out[0].data().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn wbnet_is_deterministic_per_seed() {
        let x = input(3, 16);
        let a = WbNet::new(3, 4, 9).unwrap().0.predict(&x).unwrap();
        let b = WbNet::new(3, 4, 9).unwrap().0.predict(&x).unwrap();
        assert_eq!(a, b);
        let c = WbNet::new(3, 4, 10).unwrap().0.predict(&x).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn smtnet_shapes_and_ranges() {
        let net = SmtNet::new(2, 4, 5).unwrap();
        let out = net.0.predict(&input(4, 8)).unwrap();
        assert_eq!(out[0].shape(), &[3, 8, 8]);
        assert_eq!(out[1].shape(), &[1, 8, 8]);
        assert!(out[0].data().iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(out[1].data().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn shading_decoder_does_not_touch_material() {
        let net = SmtNet::new(2, 4, 6).unwrap();
        let x = input(7, 8);
        let before = net.0.predict(&x).unwrap();
        let mut perturbed = net.clone();
        for i in perturbed.shading_decoder_params() {
            for v in perturbed.0.params_mut().tensors_mut()[i].data_mut() {
                *v += 0.3;
            }
        }
        let after = perturbed.0.predict(&x).unwrap();
        assert_eq!(before[0], after[0]);
        assert_ne!(before[1], after[1]);
    }

    #[test]
    fn indivisible_input_rejected() {
        let net = WbNet::new(3, 4, 1).unwrap();
        assert!(matches!(net.0.predict(&input(1, 12)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn from_named_checks_layout() {
        let net = WbNet::new(2, 4, 1).unwrap();
        let named: Vec<(String, Tensor)> =
            net.0.params().iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let rebuilt = UNet::from_named(net.0.config().clone(), named.clone()).unwrap();
        assert_eq!(rebuilt.params(), net.0.params());
        assert!(UNet::from_named(NetConfig::wbnet(3, 4), named).is_err());
        assert!(SmtNet::from_unet(rebuilt).is_err());
    }
}
