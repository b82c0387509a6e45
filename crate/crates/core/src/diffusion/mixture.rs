use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub mean: [f64; 2],
    /// Symmetric positive definite covariance.
    pub cov: [[f64; 2]; 2],
    pub weight: f64,
}

impl MixtureComponent {
    pub fn isotropic(mean: [f64; 2], std: f64, weight: f64) -> Self {
        Self {
            mean,
            cov: [[std * std, 0.0], [0.0, std * std]],
            weight,
        }
    }

    fn cholesky(&self) -> [[f64; 2]; 2] {
        let l00 = self.cov[0][0].sqrt();
        let l10 = self.cov[1][0] / l00;
        let l11 = (self.cov[1][1] - l10 * l10).sqrt();
        [[l00, 0.0], [l10, l11]]
    }

    fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    /// Squared Mahalanobis distance from the component mean.
    pub fn mahalanobis_sq(&self, x: [f64; 2]) -> f64 {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let det = self.det();
        let (a, b, c) = (self.cov[0][0], self.cov[0][1], self.cov[1][1]);
        (c * d[0] * d[0] - 2.0 * b * d[0] * d[1] + a * d[1] * d[1]) / det
    }

    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        -(2.0 * PI).ln() - 0.5 * self.det().ln() - 0.5 * self.mahalanobis_sq(x)
    }
}

/// Finite mixture of 2-D Gaussians; the pretraining data distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    name: String,
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn new(name: impl Into<String>, components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights must be positive and sum to 1 (sum = {total})"
            )));
        }
        for (i, c) in components.iter().enumerate() {
            let symmetric = (c.cov[0][1] - c.cov[1][0]).abs() <= 1e-12;
            if !symmetric || !(c.cov[0][0] > 0.0) || !(c.det() > 0.0) {
                return Err(Error::Config(format!(
                    "component {i}: covariance is not symmetric positive definite"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            components,
        })
    }

    /// Build from unnormalized weights.
    pub fn normalized(name: impl Into<String>, mut components: Vec<MixtureComponent>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        components.iter_mut().for_each(|c| c.weight /= total);
        Self::new(name, components)
    }

    /// `outer` isotropic modes evenly spaced on a circle plus one mode at the
    /// origin whose weight is `center_ratio` times an outer mode's.
    pub fn ring_with_center(
        name: impl Into<String>,
        outer: usize,
        radius: f64,
        std: f64,
        center_ratio: f64,
    ) -> Result<Self> {
        let mut comps: Vec<MixtureComponent> = (0..outer)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / outer as f64;
                MixtureComponent::isotropic([radius * a.cos(), radius * a.sin()], std, 1.0)
            })
            .collect();
        comps.push(MixtureComponent::isotropic([0.0, 0.0], std, center_ratio));
        Self::normalized(name, comps)
    }

    /// The didactic world: 8 outer modes on radius 3, a 0.1×-weight central mode, std 0.25.
    pub fn fig3() -> Self {
        Self::ring_with_center("fig3", 8, 3.0, 0.25, 0.1).expect("valid preset")
    }

    pub fn standard_normal() -> Self {
        Self::new(
            "unit-gaussian",
            vec![MixtureComponent::isotropic([0.0, 0.0], 1.0, 1.0)],
        )
        .expect("valid preset")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> [f64; 2] {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = &self.components[pick];
        let l = c.cholesky();
        let z = rng.normal2();
        [
            c.mean[0] + l[0][0] * z[0],
            c.mean[1] + l[1][0] * z[0] + l[1][1] * z[1],
        ]
    }

    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density(x))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        self.log_density(x).exp()
    }

    /// Index of the component whose mean is closest in Euclidean distance.
    pub fn nearest_mode(&self, x: [f64; 2]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.components.iter().enumerate() {
            let d = (x[0] - c.mean[0]).powi(2) + (x[1] - c.mean[1]).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_weights() {
        let m = GaussianMixture::fig3();
        let w = m.weights();
        assert_eq!(w.len(), 9);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[8] / w[0] - 0.1).abs() < 1e-12);
        assert!(m.components()[8].mean == [0.0, 0.0]);
    }

    #[test]
    fn rejects_invalid() {
        let bad_w = vec![MixtureComponent::isotropic([0.0, 0.0], 1.0, 0.5)];
        assert!(GaussianMixture::new("x", bad_w).is_err());
        let bad_cov = vec![MixtureComponent {
            mean: [0.0, 0.0],
            cov: [[1.0, 2.0], [2.0, 1.0]],
            weight: 1.0,
        }];
        assert!(GaussianMixture::new("x", bad_cov).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let m = GaussianMixture::fig3();
        let n = 400;
        let h = 10.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-5.0 + (i as f64 + 0.5) * h, -5.0 + (j as f64 + 0.5) * h];
                total += m.density(x) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn samples_match_component_moments() {
        let m = GaussianMixture::new(
            "corr",
            vec![MixtureComponent {
                mean: [1.0, -1.0],
                cov: [[1.0, 0.6], [0.6, 2.0]],
                weight: 1.0,
            }],
        )
        .unwrap();
        let mut rng = Rng::new(4);
        let n = 40_000;
        let xs: Vec<[f64; 2]> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mx = xs.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        let my = xs.iter().map(|x| x[1]).sum::<f64>() / n as f64;
        let cxy = xs.iter().map(|x| (x[0] - mx) * (x[1] - my)).sum::<f64>() / n as f64;
        let cyy = xs.iter().map(|x| (x[1] - my).powi(2)).sum::<f64>() / n as f64;
        assert!((mx - 1.0).abs() < 0.03 && (my + 1.0).abs() < 0.03);
        assert!((cxy - 0.6).abs() < 0.05 && (cyy - 2.0).abs() < 0.08);
    }
}
