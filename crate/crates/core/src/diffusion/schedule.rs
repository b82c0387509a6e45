use crate::error::{Error, Result};

/// Discrete DDPM noise schedule plus the fixed per-step policy standard deviations
/// and the sinusoidal time features fed to the network.
///
/// Diffusion time is 1-based: `t = T` is the pure-noise end and the reverse
/// chain's last transition is `t = 1 → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
    embed_dim: usize,
    embeddings: Vec<Vec<f64>>,
    label: String,
}

/// `dim/2` sines followed by `dim/2` cosines of `t · 1000^(-i/(dim/2))`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(1000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}

impl NoiseSchedule {
    /// Linearly spaced betas. The policy variance at step `t ≥ 2` is the DDPM
    /// posterior variance `β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t)`; the final step reuses the
    /// step-2 value because the true posterior variance there is zero.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, embed_dim: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(Error::Config(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        if !embed_dim.is_multiple_of(2) {
            return Err(Error::Config("time embedding dimension must be even".into()));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let label = format!("linear(T={steps},beta={beta_start:e}..{beta_end:e},embed={embed_dim})");
        Self::from_betas(betas, embed_dim, label)
    }

    fn from_betas(betas: Vec<f64>, embed_dim: usize, label: String) -> Result<Self> {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let posterior = |i: usize| {
            let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
            betas[i] * (1.0 - prev) / (1.0 - alpha_bars[i])
        };
        let sigmas: Vec<f64> = (0..betas.len())
            .map(|i| {
                let var = if i == 0 {
                    if betas.len() > 1 {
                        posterior(1)
                    } else {
                        betas[0]
                    }
                } else {
                    posterior(i)
                };
                var.sqrt()
            })
            .collect();
        let embeddings = (1..=betas.len())
            .map(|t| sinusoidal_embedding(t, embed_dim))
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            sigmas,
            embed_dim,
            embeddings,
            label,
        })
    }

    /// Replace the per-step policy standard deviations (indexed by `t - 1`).
    pub fn with_sigmas(mut self, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != self.steps() || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma override must be T positive values".into()));
        }
        self.sigmas = sigmas;
        self.label.push_str("+custom-sigma");
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn idx(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Usage(format!(
                "diffusion step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.idx(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.idx(t)?])
    }

    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(self.sigmas[self.idx(t)?])
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn embedding(&self, t: usize) -> Result<&[f64]> {
        Ok(&self.embeddings[self.idx(t)?])
    }

    /// Coefficients `(a, c)` of the reverse mean `μ = a·(x_t − c·ε̂)`.
    pub fn mean_coefficients(&self, t: usize) -> Result<(f64, f64)> {
        let i = self.idx(t)?;
        let a = 1.0 / self.alphas[i].sqrt();
        let c = self.betas[i] / (1.0 - self.alpha_bars[i]).sqrt();
        Ok((a, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_strictly_decreasing_and_sigmas_positive() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.2, 16).unwrap();
        assert_eq!(s.steps(), 10);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.sigmas().iter().all(|&v| v > 0.0));
        assert!((s.beta(1).unwrap() - 1e-4).abs() < 1e-18);
        assert!((s.beta(10).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_step_is_usage_error() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.2, 16).unwrap();
        assert!(matches!(s.sigma(0), Err(Error::Usage(_))));
        assert!(matches!(s.sigma(11), Err(Error::Usage(_))));
    }

    #[test]
    fn rejects_bad_betas() {
        assert!(NoiseSchedule::linear(10, 0.0, 0.2, 16).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2, 16).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0, 16).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 0.2, 15).is_err());
    }

    #[test]
    fn embeddings_are_distinct_per_step() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.2, 16).unwrap();
        for t in 1..10 {
            assert_ne!(s.embedding(t).unwrap(), s.embedding(t + 1).unwrap());
        }
    }
}
