//! Sine-activated coordinate networks and their optimizer.

mod adam;
mod mlp;
pub mod trig;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Dense, ForwardCache, MlpCheckpoint, MlpGrad, SineMlp};
