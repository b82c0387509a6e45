use crate::diffusion::policy::{accumulate_mean_gradient, gaussian_log_density, kl_equal_variance, policy_mean};
use crate::diffusion::{NoiseSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::gardo::gating::GardoState;
use crate::numerics::{MlpCache, MlpParams};

/// One scored group of trajectories with everything the loss needs.
#[derive(Debug, Clone)]
pub struct GroupRollout {
    pub trajectories: Vec<Trajectory>,
    pub proxy_rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub shaped_advantages: Vec<f64>,
    pub diversity: Vec<f64>,
    pub uncertainty: Vec<f64>,
    /// Exact batch mean of `uncertainty`, the input to `k` adaptation.
    pub mean_uncertainty: f64,
    pub gate_mask: Vec<bool>,
}

impl GroupRollout {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn final_samples(&self) -> Vec<[f64; 2]> {
        self.trajectories.iter().map(Trajectory::final_sample).collect()
    }

    fn check(&self) -> Result<()> {
        let g = self.trajectories.len();
        let lens = [
            self.proxy_rewards.len(),
            self.advantages.len(),
            self.shaped_advantages.len(),
            self.diversity.len(),
            self.uncertainty.len(),
            self.gate_mask.len(),
        ];
        if g == 0 || lens.iter().any(|&l| l != g) {
            return Err(Error::Internal(format!(
                "inconsistent group rollout: {g} trajectories, field lengths {lens:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Clipped surrogate minus the gated KL penalty; to be ascended.
    pub objective: f64,
    /// Gradient of `objective` with respect to the policy parameters.
    pub grad: MlpParams,
    /// Mean over included samples of `mask_i · (1/T) Σ_t KL_it`.
    pub kl_loss: f64,
    pub surrogate: f64,
    /// Samples dropped because an importance ratio was not finite.
    pub excluded: usize,
    /// Fraction of (sample, step) terms where the clip was binding.
    pub clip_fraction: f64,
}

struct StepTerm {
    t: usize,
    state: [f64; 2],
    mean: [f64; 2],
    cache: MlpCache,
    action: [f64; 2],
    ratio: f64,
}

/// Clipped importance-weighted surrogate over every step of every trajectory,
/// with the KL-to-reference penalty applied only to gated samples.
pub fn grpo_loss(
    group: &GroupRollout,
    policy: &MlpParams,
    old_policy: &MlpParams,
    state: &GardoState,
    schedule: &NoiseSchedule,
) -> Result<LossOutput> {
    group.check()?;
    let steps = schedule.steps();
    let eps = state.clip;
    let mut grad = policy.zeros_like();
    let mut objective = 0.0;
    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut included = 0usize;
    let mut clipped_terms = 0usize;

    for (i, traj) in group.trajectories.iter().enumerate() {
        if traj.steps() != steps {
            return Err(Error::Config(format!(
                "trajectory has {} steps, schedule has {steps}",
                traj.steps()
            )));
        }
        let mut terms = Vec::with_capacity(steps);
        let mut finite = true;
        for tr in traj.transitions() {
            let sigma = schedule.sigma(tr.t)?;
            let (mean, cache) = policy_mean(policy, schedule, tr.state, tr.t)?;
            let (old_mean, _) = policy_mean(old_policy, schedule, tr.state, tr.t)?;
            let log_ratio = gaussian_log_density(tr.action, mean, sigma)
                - gaussian_log_density(tr.action, old_mean, sigma);
            let ratio = log_ratio.exp();
            if !ratio.is_finite() {
                finite = false;
                break;
            }
            terms.push(StepTerm { t: tr.t, state: tr.state, mean, cache, action: tr.action, ratio });
        }
        if !finite {
            log::warn!("sample {i}: non-finite importance ratio; excluded from the loss");
            continue;
        }
        included += 1;

        let adv = group.shaped_advantages[i];
        let gated = group.gate_mask[i] && state.beta > 0.0;
        for term in &terms {
            let sigma = schedule.sigma(term.t)?;
            let var = sigma * sigma;
            let clipped = term.ratio.clamp(1.0 - eps, 1.0 + eps);
            let unclipped_obj = term.ratio * adv;
            let clipped_obj = clipped * adv;
            let surrogate = unclipped_obj.min(clipped_obj);
            let active = unclipped_obj <= clipped_obj;
            if !active {
                clipped_terms += 1;
            }
            surrogate_sum += surrogate;
            objective += surrogate;

            // d/dμ of the per-step objective.
            let mut upstream = [0.0; 2];
            if active && adv != 0.0 {
                let w = adv * term.ratio / var;
                upstream[0] += w * (term.action[0] - term.mean[0]);
                upstream[1] += w * (term.action[1] - term.mean[1]);
            }
            if gated {
                let (ref_mean, _) = policy_mean(&state.reference, schedule, term.state, term.t)?;
                let kl = kl_equal_variance(term.mean, ref_mean, sigma);
                kl_sum += kl;
                objective -= state.beta * kl;
                upstream[0] -= state.beta * (term.mean[0] - ref_mean[0]) / var;
                upstream[1] -= state.beta * (term.mean[1] - ref_mean[1]) / var;
            }
            if upstream != [0.0, 0.0] {
                accumulate_mean_gradient(policy, schedule, &term.cache, term.t, upstream, 1.0, &mut grad)?;
            }
        }
    }

    let excluded = group.len() - included;
    if included == 0 {
        return Ok(LossOutput {
            objective: 0.0,
            grad,
            kl_loss: 0.0,
            surrogate: 0.0,
            excluded,
            clip_fraction: 0.0,
        });
    }
    let norm = 1.0 / (steps * included) as f64;
    grad.scale(norm);
    Ok(LossOutput {
        objective: objective * norm,
        grad,
        kl_loss: kl_sum * norm,
        surrogate: surrogate_sum * norm,
        excluded,
        clip_fraction: clipped_terms as f64 * norm,
    })
}
