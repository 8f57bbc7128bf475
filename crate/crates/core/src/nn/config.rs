use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output non-linearity of a decoder head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Sigmoid => 1,
            Activation::Softplus => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Softplus),
            _ => Err(Error::format("checkpoint", format!("unknown activation code {code}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub name: String,
    pub channels: usize,
    pub activation: Activation,
}

/// U-Net shape. Each head gets its own decoder; all decoders read the same
/// encoder features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub heads: Vec<Head>,
}

impl NetConfig {
    pub const DEFAULT_DEPTH: usize = 3;
    pub const DEFAULT_WIDTH: usize = 8;

    /// White-balance kernel estimator: RGB in, softplus RGB kernel out.
    pub fn wbnet(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            kernel: 3,
            in_channels: 3,
            heads: vec![Head {
                name: "wb".into(),
                channels: 3,
                activation: Activation::Softplus,
            }],
        }
    }

    /// Material/shading separator: sigmoid material head, softplus shading
    /// head.
    pub fn smtnet(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            kernel: 3,
            in_channels: 3,
            heads: vec![
                Head {
                    name: "m".into(),
                    channels: 3,
                    activation: Activation::Sigmoid,
                },
                Head {
                    name: "s".into(),
                    channels: 1,
                    activation: Activation::Softplus,
                },
            ],
        }
    }

    pub fn decoders(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.width < 1 || self.in_channels < 1 {
            return Err(Error::InvalidValue(format!(
                "depth, width and input channels must be >= 1: {self:?}"
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidValue(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if !(1..=2).contains(&self.heads.len()) {
            return Err(Error::InvalidValue(format!(
                "1 or 2 decoders supported, got {}",
                self.heads.len()
            )));
        }
        if self.heads.iter().any(|h| h.channels == 0) {
            return Err(Error::InvalidValue("head with zero channels".into()));
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Channels of encoder level `k`; level `depth` is the bottleneck.
    pub fn level_channels(&self, k: usize) -> usize {
        self.width << k
    }
}
