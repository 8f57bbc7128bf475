//! One TOML file covering synthesis, training and evaluation. Every key is
//! optional; unknown keys are rejected.
//!
//! ```toml
//! [synth]
//! size = 64
//! seed = 7
//!
//! [train]
//! epochs = 30
//! lr = 5e-3
//!
//! [eval]
//! ocr_cmd = "tesseract {input} stdout"
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{EvalOptions, TrainConfig};
use crate::synth::SynthesisParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub synth: SynthesisParams,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration as `resolved_config.toml` in `dir`.
    pub fn record(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("resolved_config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let c = Config::parse("[synth]\nsize = 32\n[train]\nepochs = 3\n[train.weights]\nbeta3 = 0.5\n").unwrap();
        assert_eq!(c.synth.size, 32);
        assert_eq!(c.synth.seed, SynthesisParams::default().seed);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.weights.beta3, 0.5);
        assert_eq!(c.train.weights.beta1, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[synth]\nsiz = 3", "[train]\nlearning_rate = 0.1", "[eval]\nocr = \"x\"", "[other]\n"] {
            assert!(matches!(Config::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = Config::default();
        c.eval.ocr_cmd = Some("ocr {input}".into());
        c.train.wb_checkpoint = Some("w.ckpt".into());
        c.synth.cct_range = [3000.0, 6500.0];
        assert_eq!(Config::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
