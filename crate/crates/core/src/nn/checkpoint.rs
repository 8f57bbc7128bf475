//! `.ckpt` binary format. All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "DIIWCKPT"
//! version    u32      1
//! depth, width, kernel, in_channels, head_count   u32 each
//! per head:  name (u32 length + UTF-8), channels u32, activation u8
//! step       u64      training steps taken
//! seed       u64      master seed of the run
//! opt_steps  u64      Adam update count
//! tensors    u32 count, then per tensor:
//!            name (u32 length + UTF-8), ndim u32, dims u32 × ndim,
//!            payload f32 × prod(dims)
//! ```
//!
//! Parameters are stored under their network names; Adam moments under
//! `adam.m/<name>` and `adam.v/<name>`.

use std::fs;
use std::path::Path;

use super::adam::Adam;
use super::config::{Activation, Head, NetConfig};
use super::unet::UNet;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DIIWCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub step: u64,
    pub seed: u64,
    pub opt_steps: u64,
    pub tensors: Vec<(String, Tensor)>,
}

const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

impl Checkpoint {
    pub fn from_net(net: &UNet, optimizer: Option<&Adam>, step: u64, seed: u64) -> Self {
        let mut tensors: Vec<(String, Tensor)> =
            net.params().iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let mut opt_steps = 0;
        if let Some(opt) = optimizer {
            opt_steps = opt.steps();
            let (m, v) = opt.moments();
            for (name, t) in net.params().names().iter().zip(m) {
                tensors.push((format!("{M_PREFIX}{name}"), t.clone()));
            }
            for (name, t) in net.params().names().iter().zip(v) {
                tensors.push((format!("{V_PREFIX}{name}"), t.clone()));
            }
        }
        Self {
            config: net.config().clone(),
            step,
            seed,
            opt_steps,
            tensors,
        }
    }

    pub fn network(&self) -> Result<UNet> {
        let params = self
            .tensors
            .iter()
            .filter(|(n, _)| !n.starts_with(M_PREFIX) && !n.starts_with(V_PREFIX))
            .cloned()
            .collect();
        UNet::from_named(self.config.clone(), params)
    }

    /// Adam moments, if the checkpoint carries them.
    pub fn optimizer_state(&self) -> Option<(u64, Vec<Tensor>, Vec<Tensor>)> {
        let pick = |prefix: &str| -> Vec<Tensor> {
            self.tensors
                .iter()
                .filter(|(n, _)| n.starts_with(prefix))
                .map(|(_, t)| t.clone())
                .collect()
        };
        let (m, v) = (pick(M_PREFIX), pick(V_PREFIX));
        if m.is_empty() {
            None
        } else {
            Some((self.opt_steps, m, v))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let c = &self.config;
        for v in [c.depth, c.width, c.kernel, c.in_channels, c.heads.len()] {
            put_u32(&mut out, v as u32);
        }
        for h in &c.heads {
            put_str(&mut out, &h.name);
            put_u32(&mut out, h.channels as u32);
            out.push(h.activation.code());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.opt_steps.to_le_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len() as u32);
            for d in t.shape() {
                put_u32(&mut out, *d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let depth = r.u32()? as usize;
        let width = r.u32()? as usize;
        let kernel = r.u32()? as usize;
        let in_channels = r.u32()? as usize;
        let nheads = r.u32()? as usize;
        if nheads > 16 {
            return Err(Error::format("checkpoint", format!("implausible head count {nheads}")));
        }
        let mut heads = Vec::with_capacity(nheads);
        for _ in 0..nheads {
            let name = r.string()?;
            let channels = r.u32()? as usize;
            let activation = Activation::from_code(r.take(1)?[0])?;
            heads.push(Head {
                name,
                channels,
                activation,
            });
        }
        let step = r.u64()?;
        let seed = r.u64()?;
        let opt_steps = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(Error::format("checkpoint", format!("{name}: rank {ndim}")));
            }
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        let config = NetConfig {
            depth,
            width,
            kernel,
            in_channels,
            heads,
        };
        config.validate()?;
        Ok(Self {
            config,
            step,
            seed,
            opt_steps,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint", "name is not UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::SmtNet;

    #[test]
    fn bytes_round_trip_exactly() {
        let net = SmtNet::new(2, 4, 3).unwrap();
        let mut opt = Adam::new(1e-3, net.0.params().tensors());
        let mut params = net.0.params().tensors().to_vec();
        let grads: Vec<Tensor> = params.iter().map(|p| Tensor::full(p.shape(), 0.1)).collect();
        opt.step(&mut params, &grads).unwrap();

        let ck = Checkpoint::from_net(&net.0, Some(&opt), 17, 42);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.network().unwrap().params(), net.0.params());
        let (steps, m, v) = back.optimizer_state().unwrap();
        assert_eq!(steps, 1);
        assert_eq!((m.as_slice(), v.as_slice()), opt.moments());
    }

    #[test]
    fn corrupt_input_rejected() {
        let net = SmtNet::new(1, 2, 0).unwrap();
        let bytes = Checkpoint::from_net(&net.0, None, 0, 0).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
