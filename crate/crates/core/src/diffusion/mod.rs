//! Denoising diffusion as a sequential decision process.

mod mixture;
pub mod policy;
mod pretrain;
mod schedule;

pub use mixture::{GaussianMixture, MixtureComponent};
pub use policy::{
    gaussian_log_density, policy_mean, rollout_group, sample_final, step_kl, step_log_prob,
    Trajectory, Transition,
};
pub use pretrain::{initial_params, pretrain, validation_loss, PolicyCheckpoint, PretrainConfig};
pub use schedule::{sinusoidal_embedding, NoiseSchedule};
