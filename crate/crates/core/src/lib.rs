//! Domain-generalized drug-response prediction.
//!
//! A feed-forward encoder maps expression profiles into a latent space, the
//! latent vectors are projected onto a fixed real-Fourier basis, and three
//! heads shape the frequency-domain features:
//!
//! - a response classifier trained with binary cross-entropy,
//! - a domain discriminator trained through a gradient reversal layer so
//!   the encoder learns domain-invariant features,
//! - an asymmetric cosine constraint that pulls sensitive samples together
//!   and pushes resistant samples away from them, without coupling
//!   resistant samples to each other.
//!
//! Everything runs on dense `f64` matrices with hand-written backward passes.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fourier;
pub mod losses;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use fourier::FourierBasis;
pub use tensor::{Matrix, Mode, RngState};
