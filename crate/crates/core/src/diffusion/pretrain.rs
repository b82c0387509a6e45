use std::f64::consts::PI;

use log::info;

use crate::diffusion::{GaussianMixture, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamState, Checkpoint, MlpParams, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Learning rate decays with a half cosine down to `lr * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub validation_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 60_000,
            batch_size: 256,
            lr: 1e-3,
            hidden: 64,
            final_lr_fraction: 0.02,
            validation_size: 2048,
        }
    }
}

/// Pretrained reference policy with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub params: MlpParams,
    pub mixture: String,
    pub schedule: String,
    pub seed: u64,
    pub steps: usize,
    pub validation_loss: f64,
}

impl PolicyCheckpoint {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params.clone())
            .with_meta("kind", "pretrain")
            .with_meta("mixture", &self.mixture)
            .with_meta("schedule", &self.schedule)
            .with_meta("seed", self.seed)
            .with_meta("steps", self.steps)
            .with_meta("validation_loss", format!("{:?}", self.validation_loss))
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ck.metadata
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{k}`")))
        };
        let parse_err = |k: &str| Error::Checkpoint(format!("bad metadata `{k}`"));
        Ok(Self {
            mixture: get("mixture")?,
            schedule: get("schedule")?,
            seed: get("seed")?.parse().map_err(|_| parse_err("seed"))?,
            steps: get("steps")?.parse().map_err(|_| parse_err("steps"))?,
            validation_loss: get("validation_loss")?
                .parse()
                .map_err(|_| parse_err("validation_loss"))?,
            params: ck.params,
        })
    }
}

const INIT_STREAM: u64 = 0xA11C_E000;
const VALIDATION_STREAM: u64 = 0xA11C_E001;
const BATCH_STREAM: u64 = 0xA11C_E002;

/// One `(x_t, t, ε)` noise-prediction example.
fn draw_example(mixture: &GaussianMixture, schedule: &NoiseSchedule, rng: &mut Rng) -> ([f64; 2], usize, [f64; 2]) {
    let x0 = mixture.sample(rng);
    let t = 1 + rng.below(schedule.steps());
    let eps = rng.normal2();
    let ab = schedule.alpha_bar(t).expect("t in range");
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    ([s * x0[0] + n * eps[0], s * x0[1] + n * eps[1]], t, eps)
}

fn noise_prediction(params: &MlpParams, schedule: &NoiseSchedule, x_t: [f64; 2], t: usize) -> Result<([f64; 2], crate::numerics::MlpCache)> {
    params.forward(x_t, schedule.embedding(t)?)
}

/// Mean squared noise-prediction error over a fixed held-out set.
pub fn validation_loss(
    params: &MlpParams,
    mixture: &GaussianMixture,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &Rng,
) -> Result<f64> {
    let mut r = rng.derive(VALIDATION_STREAM);
    let mut total = 0.0;
    for _ in 0..n {
        let (x_t, t, eps) = draw_example(mixture, schedule, &mut r);
        let (pred, _) = noise_prediction(params, schedule, x_t, t)?;
        total += (pred[0] - eps[0]).powi(2) + (pred[1] - eps[1]).powi(2);
    }
    Ok(total / (2 * n.max(1)) as f64)
}

/// Fit the noise-prediction network to `mixture` under `schedule`.
pub fn pretrain(
    mixture: &GaussianMixture,
    schedule: &NoiseSchedule,
    cfg: &PretrainConfig,
    rng: &Rng,
) -> Result<PolicyCheckpoint> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("pretrain batch size must be positive".into()));
    }
    let mut params = MlpParams::init(cfg.hidden, schedule.embed_dim(), &mut rng.derive(INIT_STREAM));
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut grad = params.zeros_like();
    let batches = rng.derive(BATCH_STREAM);
    let scale = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        let progress = step as f64 / cfg.steps as f64;
        let floor = cfg.final_lr_fraction;
        adam.lr = cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (PI * progress).cos()));

        grad.scale(0.0);
        let mut r = batches.derive(step as u64);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let (x_t, t, eps) = draw_example(mixture, schedule, &mut r);
            let (pred, cache) = noise_prediction(&params, schedule, x_t, t)?;
            let diff = [pred[0] - eps[0], pred[1] - eps[1]];
            loss += diff[0] * diff[0] + diff[1] * diff[1];
            // d/dpred of the per-example mean over both coordinates.
            params.backward_accumulate(&cache, diff, scale, &mut grad)?;
        }
        loss *= scale * 0.5;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "pretraining diverged (seed {}, step {step})",
                rng.seed()
            )));
        }
        adam_step(&mut params, &grad, &mut adam).map_err(|e| {
            Error::Numeric(format!("{e} (pretrain seed {}, step {step})", rng.seed()))
        })?;
    }

    let validation_loss = validation_loss(&params, mixture, schedule, cfg.validation_size, rng)?;
    info!(
        "pretrained `{}` for {} steps, validation loss {validation_loss:.5}",
        mixture.name(),
        cfg.steps
    );
    Ok(PolicyCheckpoint {
        params,
        mixture: mixture.name().to_string(),
        schedule: schedule.label().to_string(),
        seed: rng.seed(),
        steps: cfg.steps,
        validation_loss,
    })
}

/// Initialization that [`pretrain`] would start from; equal to a zero-step run.
pub fn initial_params(cfg: &PretrainConfig, schedule: &NoiseSchedule, rng: &Rng) -> MlpParams {
    MlpParams::init(cfg.hidden, schedule.embed_dim(), &mut rng.derive(INIT_STREAM))
}
