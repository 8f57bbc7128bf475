//! Reflectance estimation for photographed documents.
//!
//! An observed image is modelled as `I = M ⊗ T ⊗ Σ λ_i η_i l_i`: material
//! tint `M`, printed texture `T`, and per-light shading `λ_i` scaled by
//! intensity `η_i` and coloured by `l_i`. Two networks undo it in stages: a
//! white-balance kernel estimator, then a material/shading separator.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod illuminant;
pub mod imaging;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod verify;

pub use config::Config;
pub use error::{Error, Result};
