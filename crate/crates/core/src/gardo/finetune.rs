use std::fmt;
use std::time::Instant;

use crate::diffusion::{rollout_group, sample_final, NoiseSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::gardo::advantage::{compute_advantages, shape_advantages};
use crate::gardo::diversity::{diversity_scores, FeatureMap, FeatureMapConfig};
use crate::gardo::gating::{gate_mask, GardoConfig, GardoState};
use crate::gardo::loss::{grpo_loss, GroupRollout};
use crate::gardo::uncertainty::{batch_mean_uncertainty, estimate_uncertainty};
use crate::harness::metrics_log::MetricsRecord;
use crate::metrics::{diversity_metric, mode_coverage, COVERAGE_THRESHOLD};
use crate::numerics::{adam_step, AdamState, MlpParams, Rng};
use crate::rewards::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Clipped GRPO without any KL term.
    Grpo,
    /// As `Grpo`, advantages only mean-centered.
    GrpoNoStd,
    /// KL to the fixed pretrained reference on every sample.
    GrpoKl,
    /// Gated KL, adaptive reference reset, diversity-aware shaping.
    Gardo,
    /// `Gardo` without the diversity shaping.
    GardoNoDiv,
}

/// How the KL term is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMode {
    Off,
    Full,
    Gated,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Grpo,
        Method::GrpoNoStd,
        Method::GrpoKl,
        Method::Gardo,
        Method::GardoNoDiv,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Grpo => "grpo",
            Method::GrpoNoStd => "grpo-nostd",
            Method::GrpoKl => "grpo-kl",
            Method::Gardo => "gardo",
            Method::GardoNoDiv => "gardo-no-div",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == tag)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown method `{tag}` (known: grpo, grpo-nostd, grpo-kl, gardo, gardo-no-div)"
                ))
            })
    }

    pub fn kl_mode(self) -> KlMode {
        match self {
            Method::Grpo | Method::GrpoNoStd => KlMode::Off,
            Method::GrpoKl => KlMode::Full,
            Method::Gardo | Method::GardoNoDiv => KlMode::Gated,
        }
    }

    pub fn default_use_std(self) -> bool {
        matches!(self, Method::Grpo | Method::GrpoKl)
    }

    pub fn default_diversity(self) -> bool {
        self == Method::Gardo
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub method: Method,
    pub seed: u64,
    pub gardo: GardoConfig,
    pub group_size: usize,
    pub lr: f64,
    pub iterations: usize,
    /// `None` defers to the method's default.
    pub use_std: Option<bool>,
    pub diversity: Option<bool>,
    pub shared_noise: bool,
    pub features: FeatureMapConfig,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub checkpoint_every: usize,
    pub record_wall_clock: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            method: Method::Gardo,
            seed: 0,
            gardo: GardoConfig::default(),
            group_size: 24,
            lr: 3e-4,
            iterations: 1000,
            use_std: None,
            diversity: None,
            shared_noise: false,
            features: FeatureMapConfig::default(),
            eval_every: 25,
            eval_samples: 512,
            checkpoint_every: 50,
            record_wall_clock: false,
        }
    }
}

impl FinetuneConfig {
    pub fn use_std(&self) -> bool {
        self.use_std.unwrap_or_else(|| self.method.default_use_std())
    }

    pub fn diversity(&self) -> bool {
        self.diversity.unwrap_or_else(|| self.method.default_diversity())
    }

    /// KL coefficient actually applied; methods without a KL term use 0.
    pub fn effective_beta(&self) -> f64 {
        match self.method.kl_mode() {
            KlMode::Off => 0.0,
            _ => self.gardo.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gardo.validate()?;
        if self.group_size < 2 {
            return Err(Error::Config(format!("group size must be >= 2, got {}", self.group_size)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("eval_every and checkpoint_every must be positive".into()));
        }
        if self.eval_samples < crate::metrics::MIN_COVERAGE_SAMPLES {
            return Err(Error::Config(format!(
                "eval_samples must be >= {}, got {}",
                crate::metrics::MIN_COVERAGE_SAMPLES,
                self.eval_samples
            )));
        }
        Ok(())
    }
}

/// Receives per-iteration output of [`finetune`]; the library itself does no IO.
pub trait RunObserver {
    fn on_iteration(&mut self, _record: &MetricsRecord, _group: &GroupRollout) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _iteration: usize, _policy: &MlpParams) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub policy: MlpParams,
    pub records: Vec<MetricsRecord>,
    pub resets: usize,
    pub final_k: f64,
    pub excluded_samples: usize,
}

const ROLLOUT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const FEATURE_STREAM: u64 = 3;

/// Fine-tune `pretrained` against `world.proxy`, one group per iteration.
pub fn finetune(
    world: &World,
    schedule: &NoiseSchedule,
    pretrained: &MlpParams,
    cfg: &FinetuneConfig,
    observer: &mut dyn RunObserver,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let run = Rng::stream(cfg.seed, 0x6A4D_0F1E);
    let fmap = FeatureMap::from_config(&cfg.features, &mut run.derive(FEATURE_STREAM))?;
    let rollouts = run.derive(ROLLOUT_STREAM);
    let evals = run.derive(EVAL_STREAM);

    let kl_mode = cfg.method.kl_mode();
    let use_std = cfg.use_std();
    let shape = cfg.diversity();
    let mut gardo_cfg = cfg.gardo.clone();
    gardo_cfg.beta = cfg.effective_beta();
    let mut state = GardoState::new(&gardo_cfg, pretrained.clone())?;
    let mut policy = pretrained.clone();
    let mut adam = AdamState::new(&policy, cfg.lr);

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut excluded_samples = 0;
    let mut coverage = 0usize;

    for iteration in 1..=cfg.iterations {
        let started = Instant::now();
        let old_policy = policy.clone();
        let trajectories = rollout_group(
            &old_policy,
            schedule,
            cfg.group_size,
            cfg.shared_noise,
            &rollouts.derive(iteration as u64),
        )?;
        let group = score_group(world, &fmap, trajectories, use_std, shape, kl_mode, state.k)?;
        let true_rewards = world.true_reward.evaluate_all(&group.final_samples());

        let loss = grpo_loss(&group, &policy, &old_policy, &state, schedule)?;
        excluded_samples += loss.excluded;
        let mut ascent = loss.grad;
        ascent.scale(-1.0);
        adam_step(&mut policy, &ascent, &mut adam).map_err(|e| {
            Error::Numeric(format!("seed {} iteration {iteration}: {e}", cfg.seed))
        })?;

        let mut reset = false;
        if kl_mode == KlMode::Gated {
            state.adapt_k(group.mean_uncertainty);
            reset = state.maybe_reset_reference(&policy, loss.kl_loss);
        }

        if iteration % cfg.eval_every == 0 || iteration == cfg.iterations || iteration == 1 {
            let samples = sample_final(&policy, schedule, cfg.eval_samples, &evals.derive(iteration as u64))?;
            coverage = mode_coverage(&samples, &world.mixture, COVERAGE_THRESHOLD)?.covered;
        }

        let record = MetricsRecord {
            iteration,
            mean_proxy_reward: mean(&group.proxy_rewards),
            mean_true_reward: mean(&true_rewards),
            diversity: diversity_metric(&group.final_samples(), &fmap)?,
            k: state.k,
            gated_fraction: group.gate_mask.iter().filter(|&&m| m).count() as f64 / group.len() as f64,
            kl_loss: loss.kl_loss,
            reset,
            mode_coverage: coverage,
            wall_ms: if cfg.record_wall_clock {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        observer.on_iteration(&record, &group)?;
        records.push(record);

        if iteration % cfg.checkpoint_every == 0 || iteration == cfg.iterations {
            observer.on_checkpoint(iteration, &policy)?;
        }
    }

    Ok(FinetuneOutcome {
        policy,
        records,
        resets: state.resets,
        final_k: state.k,
        excluded_samples,
    })
}

/// Rewards, advantages, diversity, uncertainty and gate for one group.
pub fn score_group(
    world: &World,
    fmap: &FeatureMap,
    trajectories: Vec<Trajectory>,
    use_std: bool,
    shape: bool,
    kl_mode: KlMode,
    k: f64,
) -> Result<GroupRollout> {
    let samples: Vec<[f64; 2]> = trajectories.iter().map(Trajectory::final_sample).collect();
    let proxy_rewards = world.proxy.evaluate_all(&samples);
    let auxiliary: Vec<Vec<f64>> = world.auxiliaries.iter().map(|a| a.evaluate_all(&samples)).collect();
    let advantages = compute_advantages(&proxy_rewards, use_std)?;
    let diversity = diversity_scores(&samples, fmap)?;
    let shaped_advantages = if shape {
        shape_advantages(&advantages, &diversity)?
    } else {
        advantages.clone()
    };
    let uncertainty = estimate_uncertainty(&proxy_rewards, &auxiliary)?;
    let mean_uncertainty = batch_mean_uncertainty(&proxy_rewards, &auxiliary)?;
    let gate = match kl_mode {
        KlMode::Off => vec![false; samples.len()],
        KlMode::Full => vec![true; samples.len()],
        KlMode::Gated => gate_mask(&uncertainty, k),
    };
    Ok(GroupRollout {
        trajectories,
        proxy_rewards,
        advantages,
        shaped_advantages,
        diversity,
        uncertainty,
        mean_uncertainty,
        gate_mask: gate,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_tag(m.tag()).unwrap(), m);
        }
        assert!(Method::from_tag("ppo").is_err());
    }

    #[test]
    fn dispatch_defaults() {
        assert_eq!(Method::Grpo.kl_mode(), KlMode::Off);
        assert!(Method::Gardo.default_diversity());
        assert!(!Method::GardoNoDiv.default_diversity());
        let cfg = FinetuneConfig { method: Method::Grpo, ..Default::default() };
        assert_eq!(cfg.effective_beta(), 0.0);
    }
}
