use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::MlpParams;

/// Nearest-rank `q` quantile of `values` (q in [0, 1]).
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // The small slack absorbs products like 0.9 * 10 landing a hair above an integer.
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Samples whose uncertainty lies strictly above the `(1 - k)` quantile.
pub fn gate_mask(uncertainty: &[f64], k: f64) -> Vec<bool> {
    if uncertainty.is_empty() {
        return Vec::new();
    }
    let threshold = nearest_rank_quantile(uncertainty, 1.0 - k);
    uncertainty.iter().map(|&u| u > threshold).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GardoConfig {
    pub beta: f64,
    pub clip: f64,
    pub kl_threshold: f64,
    pub reset_steps: usize,
    pub window: usize,
    pub initial_k: f64,
}

impl Default for GardoConfig {
    fn default() -> Self {
        Self {
            beta: 0.04,
            clip: 1e-4,
            kl_threshold: 1e-4,
            reset_steps: 100,
            window: 20,
            initial_k: 0.1,
        }
    }
}

impl GardoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must lie in (0, 1), got {}", self.clip));
        }
        if !(self.kl_threshold >= 0.0) {
            return bad(format!("kl threshold must be >= 0, got {}", self.kl_threshold));
        }
        if self.reset_steps == 0 || self.window == 0 {
            return bad("reset_steps and window must be positive".into());
        }
        if !(self.initial_k > 0.0 && self.initial_k <= 1.0) {
            return bad(format!("k must lie in (0, 1], got {}", self.initial_k));
        }
        Ok(())
    }
}

/// Loop-owned regularization state: gate fraction, uncertainty window, and
/// the reference policy with its reset counter.
#[derive(Debug, Clone)]
pub struct GardoState {
    pub k: f64,
    window: VecDeque<f64>,
    pub steps_since_reset: usize,
    pub reference: MlpParams,
    pub beta: f64,
    pub clip: f64,
    pub kl_threshold: f64,
    pub reset_steps: usize,
    pub window_size: usize,
    pub resets: usize,
}

impl GardoState {
    pub fn new(cfg: &GardoConfig, reference: MlpParams) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            k: cfg.initial_k,
            window: VecDeque::with_capacity(cfg.window + 1),
            steps_since_reset: 0,
            reference,
            beta: cfg.beta,
            clip: cfg.clip,
            kl_threshold: cfg.kl_threshold,
            reset_steps: cfg.reset_steps,
            window_size: cfg.window,
            resets: 0,
        })
    }

    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Grow `k` when the batch is more uncertain than anything in a full
    /// window, shrink it when less; then record the batch mean.
    pub fn adapt_k(&mut self, batch_mean_u: f64) {
        if self.window.len() >= self.window_size {
            let max = self.window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = self.window.iter().copied().fold(f64::INFINITY, f64::min);
            if batch_mean_u > max {
                self.k = (self.k * 1.1).min(1.0);
            } else if batch_mean_u < min {
                self.k *= 0.9;
            }
        }
        self.window.push_back(batch_mean_u);
        while self.window.len() > self.window_size {
            self.window.pop_front();
        }
    }

    /// Count this gradient step, then copy `current` into the reference if
    /// the last KL loss exceeded the threshold or `reset_steps` steps have
    /// passed since the previous reset. Returns whether a reset happened.
    pub fn maybe_reset_reference(&mut self, current: &MlpParams, last_kl_loss: f64) -> bool {
        self.steps_since_reset += 1;
        if last_kl_loss > self.kl_threshold || self.steps_since_reset >= self.reset_steps {
            self.reference = current.clone();
            self.steps_since_reset = 0;
            self.resets += 1;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GardoState {
        GardoState::new(&GardoConfig::default(), MlpParams::zeros(4, 16, crate::numerics::Activation::Tanh)).unwrap()
    }

    #[test]
    fn single_max_masked() {
        let u: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let m = gate_mask(&u, 0.1);
        assert_eq!(m.iter().filter(|&&b| b).count(), 1);
        assert!(m[9]);
    }

    #[test]
    fn equal_values_mask_nothing() {
        assert!(gate_mask(&[0.2; 24], 0.5).iter().all(|&b| !b));
    }

    #[test]
    fn full_k_masks_all_but_minimum() {
        let m = gate_mask(&[0.3, 0.1, 0.2, 0.4], 1.0);
        assert_eq!(m, vec![true, false, true, true]);
    }

    #[test]
    fn window_fill_guard() {
        let mut s = state();
        s.adapt_k(5.0);
        assert_eq!(s.k, 0.1);
        assert_eq!(s.window().len(), 1);
    }

    #[test]
    fn k_is_capped() {
        let mut s = state();
        for _ in 0..20 {
            s.adapt_k(0.0);
        }
        s.k = 0.95;
        s.adapt_k(1.0);
        assert_eq!(s.k, 1.0);
    }

    #[test]
    fn decreasing_stream() {
        let mut s = state();
        for i in 0..30 {
            s.adapt_k(-(i as f64));
        }
        let mut expect = 0.1;
        for _ in 0..10 {
            expect *= 0.9;
        }
        assert!((s.k - expect).abs() < 1e-15);
        assert_eq!(s.window().len(), 20);
    }

    #[test]
    fn kl_triggered_reset() {
        let mut s = state();
        let mut cur = s.reference.clone();
        cur.set_flat(0, 1.0);
        assert!(s.maybe_reset_reference(&cur, 2e-4));
        assert_eq!(s.reference, cur);
        assert_eq!(s.steps_since_reset, 0);
    }

    #[test]
    fn counter_triggered_reset_at_m() {
        let mut s = state();
        let cur = s.reference.clone();
        for step in 1..=100 {
            let fired = s.maybe_reset_reference(&cur, 0.0);
            assert_eq!(fired, step == 100, "step {step}");
            assert!(s.steps_since_reset < 100);
        }
    }

    #[test]
    fn rejects_bad_k() {
        let cfg = GardoConfig { initial_k: 0.0, ..Default::default() };
        assert!(GardoState::new(&cfg, MlpParams::zeros(2, 16, crate::numerics::Activation::Tanh)).is_err());
    }
}
