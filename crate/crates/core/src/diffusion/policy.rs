//! The reverse chain viewed as a policy: state `(t, x_t)`, Gaussian action
//! `x_{t-1} ~ N(μ_θ(x_t, t), σ_t² I)`, reward only on the final sample.

use std::f64::consts::PI;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::numerics::{MlpCache, MlpParams, Rng};

/// One reverse-denoising episode.
///
/// `states[0] = x_T` and `states[T] = x_0`. Transition `j` goes from
/// `states[j]` to `states[j + 1]` at diffusion step `t = T - j`, with policy mean
/// `means[j]` and log-density `log_probs[j]` under the acting policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 2]>,
    pub means: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub condition: u32,
}

/// A single stored transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub t: usize,
    pub state: [f64; 2],
    pub action: [f64; 2],
    pub mean: [f64; 2],
    pub log_prob: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.means.len()
    }

    /// The sample scored by the reward.
    pub fn final_sample(&self) -> [f64; 2] {
        *self.states.last().expect("trajectory has states")
    }

    pub fn initial_noise(&self) -> [f64; 2] {
        self.states[0]
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        let total = self.steps();
        (0..total).map(move |j| Transition {
            t: total - j,
            state: self.states[j],
            action: self.states[j + 1],
            mean: self.means[j],
            log_prob: self.log_probs[j],
        })
    }
}

/// `log N(x; mean, σ² I)` in two dimensions.
#[inline]
pub fn gaussian_log_density(x: [f64; 2], mean: [f64; 2], sigma: f64) -> f64 {
    let var = sigma * sigma;
    let d2 = (x[0] - mean[0]).powi(2) + (x[1] - mean[1]).powi(2);
    -(2.0 * PI * var).ln() - d2 / (2.0 * var)
}

/// Reverse mean `μ_θ(x_t, t)` from the network's noise prediction, with the
/// network cache for backpropagation.
pub fn policy_mean(
    params: &MlpParams,
    schedule: &NoiseSchedule,
    x_t: [f64; 2],
    t: usize,
) -> Result<([f64; 2], MlpCache)> {
    if params.embed_dim() != schedule.embed_dim() {
        return Err(Error::Config(format!(
            "network expects {}-dim time features, schedule provides {}",
            params.embed_dim(),
            schedule.embed_dim()
        )));
    }
    let (a, c) = schedule.mean_coefficients(t)?;
    let (eps, cache) = params.forward(x_t, schedule.embedding(t)?)?;
    Ok(([a * (x_t[0] - c * eps[0]), a * (x_t[1] - c * eps[1])], cache))
}

/// `∂μ/∂ε̂`, a scalar multiple of the identity.
pub fn mean_jacobian_scale(schedule: &NoiseSchedule, t: usize) -> Result<f64> {
    let (a, c) = schedule.mean_coefficients(t)?;
    Ok(-a * c)
}

/// Backpropagate an upstream gradient on `μ` into `grad`.
pub fn accumulate_mean_gradient(
    params: &MlpParams,
    schedule: &NoiseSchedule,
    cache: &MlpCache,
    t: usize,
    grad_mean: [f64; 2],
    scale: f64,
    grad: &mut MlpParams,
) -> Result<()> {
    let j = mean_jacobian_scale(schedule, t)?;
    params.backward_accumulate(cache, grad_mean, scale * j, grad)
}

pub fn step_log_prob(
    params: &MlpParams,
    schedule: &NoiseSchedule,
    x_t: [f64; 2],
    t: usize,
    x_prev: [f64; 2],
) -> Result<f64> {
    let sigma = schedule.sigma(t)?;
    let (mean, _) = policy_mean(params, schedule, x_t, t)?;
    Ok(gaussian_log_density(x_prev, mean, sigma))
}

/// Closed-form `KL(π_θ(·|x_t) ‖ π_ref(·|x_t))` for equal-variance Gaussians.
/// Symmetric in its two policies because the variances coincide.
pub fn step_kl(
    policy: &MlpParams,
    reference: &MlpParams,
    schedule: &NoiseSchedule,
    x_t: [f64; 2],
    t: usize,
) -> Result<f64> {
    if !policy.same_shape(reference) {
        return Err(Error::Config("policy and reference shapes differ".into()));
    }
    let sigma = schedule.sigma(t)?;
    let (m, _) = policy_mean(policy, schedule, x_t, t)?;
    let (r, _) = policy_mean(reference, schedule, x_t, t)?;
    Ok(kl_equal_variance(m, r, sigma))
}

#[inline]
pub fn kl_equal_variance(mean_p: [f64; 2], mean_q: [f64; 2], sigma: f64) -> f64 {
    ((mean_p[0] - mean_q[0]).powi(2) + (mean_p[1] - mean_q[1]).powi(2)) / (2.0 * sigma * sigma)
}

/// Run the reverse chain from `x_T` with per-step noise from `noise`.
pub fn rollout_from(
    policy: &MlpParams,
    schedule: &NoiseSchedule,
    x_start: [f64; 2],
    noise: &mut Rng,
    condition: u32,
) -> Result<Trajectory> {
    let total = schedule.steps();
    let mut states = Vec::with_capacity(total + 1);
    let mut means = Vec::with_capacity(total);
    let mut log_probs = Vec::with_capacity(total);
    let mut x = x_start;
    states.push(x);
    for t in (1..=total).rev() {
        let sigma = schedule.sigma(t)?;
        let (mean, _) = policy_mean(policy, schedule, x, t)?;
        let z = noise.normal2();
        let next = [mean[0] + sigma * z[0], mean[1] + sigma * z[1]];
        log_probs.push(gaussian_log_density(next, mean, sigma));
        means.push(mean);
        states.push(next);
        x = next;
    }
    Ok(Trajectory {
        states,
        means,
        log_probs,
        condition,
    })
}

/// Stream label reserved for the shared initial noise of a group.
const SHARED_START_STREAM: u64 = u64::MAX;

/// `group_size` trajectories under one condition.
///
/// Trajectory `i` draws its transition noise from `rng.derive(i)`. With
/// `shared_noise` every member starts from the same `x_T`, drawn from a
/// dedicated stream; otherwise each draws its own `x_T` first.
pub fn rollout_group(
    policy: &MlpParams,
    schedule: &NoiseSchedule,
    group_size: usize,
    shared_noise: bool,
    rng: &Rng,
) -> Result<Vec<Trajectory>> {
    if group_size < 2 {
        return Err(Error::Usage(format!(
            "group size must be at least 2, got {group_size}"
        )));
    }
    let shared = rng.derive(SHARED_START_STREAM).normal2();
    (0..group_size)
        .map(|i| {
            let mut noise = rng.derive(i as u64);
            let start = if shared_noise { shared } else { noise.normal2() };
            rollout_from(policy, schedule, start, &mut noise, 0)
        })
        .collect()
}

/// Final samples of `n` independent chains; used for evaluation.
pub fn sample_final(
    policy: &MlpParams,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &Rng,
) -> Result<Vec<[f64; 2]>> {
    (0..n)
        .map(|i| {
            let mut noise = rng.derive(i as u64);
            let start = noise.normal2();
            let total = schedule.steps();
            let mut x = start;
            for t in (1..=total).rev() {
                let sigma = schedule.sigma(t)?;
                let (mean, _) = policy_mean(policy, schedule, x, t)?;
                let z = noise.normal2();
                x = [mean[0] + sigma * z[0], mean[1] + sigma * z[1]];
            }
            Ok(x)
        })
        .collect()
}
