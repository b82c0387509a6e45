//! Group-relative policy optimization with uncertainty-gated KL, adaptive
//! reference resets and diversity-aware advantage shaping.

pub mod advantage;
pub mod diversity;
pub mod finetune;
pub mod gating;
pub mod loss;
pub mod uncertainty;

pub use advantage::{compute_advantages, shape_advantages, STD_FLOOR};
pub use diversity::{diversity_scores, FeatureKind, FeatureMap, FeatureMapConfig};
pub use finetune::{finetune, score_group, FinetuneConfig, FinetuneOutcome, KlMode, Method, RunObserver};
pub use gating::{gate_mask, nearest_rank_quantile, GardoConfig, GardoState};
pub use loss::{grpo_loss, GroupRollout, LossOutput};
pub use uncertainty::{batch_mean_uncertainty, estimate_uncertainty, win_rates};
