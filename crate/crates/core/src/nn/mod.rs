//! Toy-scale U-Nets, the Adam optimiser and checkpoint persistence.

mod adam;
mod checkpoint;
mod config;
mod unet;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{Activation, Head, NetConfig};
pub use unet::{Params, SmtNet, UNet, WbNet, LEAKY_SLOPE};
