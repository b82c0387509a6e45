//! Dense linear algebra, the denoising MLP, Adam, and the seeded RNG.

mod adam;
pub mod checkpoint;
mod matrix;
pub mod mlp;
mod rng;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use matrix::Matrix;
pub use mlp::{Activation, MlpCache, MlpParams};
pub use rng::Rng;
