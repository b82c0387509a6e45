//! Evaluation: sample diversity, mode coverage, Monte-Carlo returns, and the
//! grid oracle for the closed-form KL-regularized optimum.

mod grid;

pub use grid::{optimal_grid_solution, verify_proposition1, GridDensity, LOG_FLOOR};

use crate::diffusion::{sample_final, GaussianMixture, NoiseSchedule};
use crate::error::{Error, Result};
use crate::gardo::diversity::{cosine_distance, FeatureMap};
use crate::numerics::{MlpParams, Rng};
use crate::rewards::{hacking_gap, JEstimate, RewardSpec, World, MIN_J_SAMPLES};

pub const MIN_COVERAGE_SAMPLES: usize = 256;
pub const COVERAGE_THRESHOLD: f64 = 0.02;
/// Samples farther than this many standard deviations from every mode are unassigned.
pub const SUPPORT_RADIUS_STD: f64 = 3.0;

/// Mean cosine distance over all pairs `i ≠ j`. Pairs with a zero-norm
/// embedding are skipped.
pub fn diversity_metric(samples: &[[f64; 2]], fmap: &FeatureMap) -> Result<f64> {
    let g = samples.len();
    if g < 2 {
        return Err(Error::Usage(format!("diversity needs at least 2 samples, got {g}")));
    }
    let emb: Vec<Vec<f64>> = samples.iter().map(|&x| fmap.embed(x)).collect();
    let zero: Vec<bool> = emb.iter().map(|e| e.iter().all(|&v| v == 0.0)).collect();
    if zero.iter().any(|&z| z) {
        log::warn!("zero-norm embedding in diversity metric; affected pairs skipped");
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..g {
        for j in (i + 1)..g {
            if zero[i] || zero[j] {
                continue;
            }
            total += cosine_distance(&emb[i], &emb[j]);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub covered: usize,
    /// Fraction of samples assigned to each mixture component.
    pub masses: Vec<f64>,
    pub unassigned: f64,
}

/// Assign each sample to its nearest mode if within three standard
/// deviations; a mode is covered when its mass reaches `threshold`.
pub fn mode_coverage(samples: &[[f64; 2]], mixture: &GaussianMixture, threshold: f64) -> Result<Coverage> {
    if samples.len() < MIN_COVERAGE_SAMPLES {
        return Err(Error::Usage(format!(
            "mode coverage needs at least {MIN_COVERAGE_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let comps = mixture.components();
    let mut counts = vec![0usize; comps.len()];
    let mut unassigned = 0usize;
    let r2 = SUPPORT_RADIUS_STD * SUPPORT_RADIUS_STD;
    for &x in samples {
        let (best, d2) = comps
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.mahalanobis_sq(x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("mixture has components");
        if d2 <= r2 {
            counts[best] += 1;
        } else {
            unassigned += 1;
        }
    }
    let n = samples.len() as f64;
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(Coverage {
        covered: masses.iter().filter(|&&m| m >= threshold).count(),
        masses,
        unassigned: unassigned as f64 / n,
    })
}

/// Fraction of samples whose nearest mode (Euclidean) is each component.
pub fn nearest_mode_masses(samples: &[[f64; 2]], mixture: &GaussianMixture) -> Vec<f64> {
    let mut counts = vec![0usize; mixture.len()];
    for &x in samples {
        counts[mixture.nearest_mode(x)] += 1;
    }
    counts.iter().map(|&c| c as f64 / samples.len() as f64).collect()
}

/// Monte-Carlo `E_π[R(x_0)]` over `n` independent chains.
pub fn estimate_j(
    policy: &MlpParams,
    schedule: &NoiseSchedule,
    reward: &RewardSpec,
    n: usize,
    rng: &Rng,
) -> Result<JEstimate> {
    if n < MIN_J_SAMPLES {
        return Err(Error::Usage(format!("J estimate needs at least {MIN_J_SAMPLES} samples, got {n}")));
    }
    let samples = sample_final(policy, schedule, n, rng)?;
    Ok(JEstimate::from_values(&reward.evaluate_all(&samples)))
}

/// Area under the ROC curve of `scores` for the positive class; ties count
/// one half. `None` when either class is empty.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|p| *p.1).map(|p| *p.0).collect();
    let mut neg: Vec<f64> = scores.iter().zip(positive).filter(|p| !*p.1).map(|p| *p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in &pos {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_proxy_reward: f64,
    pub mean_true_reward: f64,
    pub true_reward_stderr: f64,
    pub diversity: f64,
    pub coverage: Coverage,
    pub hacked: bool,
    pub hacking_gap: f64,
    pub samples: usize,
    pub seed: u64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "seed,samples,mean_proxy_reward,mean_true_reward,true_reward_stderr,diversity,modes_covered,unassigned_mass,hacked,hacking_gap";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{},{:?},{},{:?}",
            self.seed,
            self.samples,
            self.mean_proxy_reward,
            self.mean_true_reward,
            self.true_reward_stderr,
            self.diversity,
            self.coverage.covered,
            self.coverage.unassigned,
            self.hacked as u8,
            self.hacking_gap
        )
    }
}

/// Score `policy` against a world, including the hacking check against
/// `reference`. Both policies are sampled from the same stream.
pub fn evaluate(
    policy: &MlpParams,
    reference: &MlpParams,
    schedule: &NoiseSchedule,
    world: &World,
    fmap: &FeatureMap,
    n: usize,
    seed: u64,
) -> Result<EvalReport> {
    let rng = Rng::stream(seed, 0xE7A1);
    let samples = sample_final(policy, schedule, n, &rng)?;
    let ref_samples = sample_final(reference, schedule, n, &rng)?;
    let truth = JEstimate::from_values(&world.true_reward.evaluate_all(&samples));
    let ref_truth = JEstimate::from_values(&world.true_reward.evaluate_all(&ref_samples));
    let verdict = hacking_gap(truth, ref_truth)?;
    let proxy = world.proxy.evaluate_all(&samples);
    Ok(EvalReport {
        mean_proxy_reward: proxy.iter().sum::<f64>() / n as f64,
        mean_true_reward: truth.mean,
        true_reward_stderr: truth.stderr,
        diversity: diversity_metric(&samples[..n.min(512)], fmap)?,
        coverage: mode_coverage(&samples, &world.mixture, COVERAGE_THRESHOLD)?,
        hacked: verdict.hacked,
        hacking_gap: verdict.gap,
        samples: n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diversity_trivial_cases() {
        let f = FeatureMap::identity([0.0, 0.0]);
        assert_eq!(diversity_metric(&[[1.0, 1.0]; 4], &f).unwrap(), 0.0);
        assert!((diversity_metric(&[[1.0, 0.0], [0.0, 2.0]], &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_single_point_mass() {
        let m = GaussianMixture::fig3();
        let c = mode_coverage(&vec![[3.0, 0.0]; 300], &m, 0.02).unwrap();
        assert_eq!(c.covered, 1);
        assert_eq!(c.masses[0], 1.0);
    }

    #[test]
    fn coverage_off_support() {
        let m = GaussianMixture::fig3();
        let c = mode_coverage(&vec![[10.0, 10.0]; 300], &m, 0.02).unwrap();
        assert_eq!(c.covered, 0);
        assert_eq!(c.unassigned, 1.0);
        assert!(mode_coverage(&[[0.0, 0.0]; 10], &m, 0.02).is_err());
    }

    #[test]
    fn coverage_of_mixture_samples() {
        let m = GaussianMixture::fig3();
        let mut rng = Rng::new(11);
        let xs: Vec<[f64; 2]> = (0..4096).map(|_| m.sample(&mut rng)).collect();
        // The central mode holds 0.1/8.1 ≈ 0.0123 of the mass, under the
        // default threshold; the eight outer modes are covered.
        let c = mode_coverage(&xs, &m, 0.02).unwrap();
        assert_eq!(c.covered, 8);
        assert!((c.masses[8] - 0.0123).abs() < 0.006);
        assert!(c.masses.iter().sum::<f64>() <= 1.0);
        assert_eq!(mode_coverage(&xs, &m, 0.005).unwrap().covered, 9);
    }

    #[test]
    fn auc_basic() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]), Some(1.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.5], &[true]), None);
    }
}
