//! Network assembly: encoder, Fourier projection, response classifier,
//! gradient reversal and domain discriminator.

mod checkpoint;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use network::{grl_backward, Forward, GrlConfig, Network, Upstream};
pub use params::{Architecture, Dense, ModelParams, Norm, Weights};
