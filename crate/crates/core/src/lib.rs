//! Diffusion-policy fine-tuning with gated, adaptively reset KL regularization
//! and diversity-aware advantage shaping, on small two-dimensional worlds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod gardo;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod rewards;

pub use error::{Error, Result};
