use crate::diffusion::GaussianMixture;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::rewards::RewardSpec;

/// Floor applied before taking logs of densities.
pub const LOG_FLOOR: f64 = 1e-300;

/// A probability mass function over the cells of a regular 2-D grid, stored
/// as normalized log-masses.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    log_mass: Vec<f64>,
    /// Log of the normalizer divided out of the unnormalized input.
    pub log_partition: f64,
}

fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl GridDensity {
    /// Normalize unnormalized log-weights laid out row-major (`y` outer).
    pub fn from_log_weights(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize, log_weights: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || log_weights.len() != nx * ny {
            return Err(Error::Config(format!(
                "grid {nx}x{ny} does not match {} weights",
                log_weights.len()
            )));
        }
        if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numeric("grid log-weights contain NaN or +inf".into()));
        }
        let log_z = logsumexp(&log_weights);
        if !log_z.is_finite() {
            return Err(Error::Numeric("grid has no positive mass".into()));
        }
        Ok(Self {
            lo,
            hi,
            nx,
            ny,
            log_mass: log_weights.into_iter().map(|v| v - log_z).collect(),
            log_partition: log_z,
        })
    }

    /// Cell masses proportional to the mixture density at cell centers.
    pub fn from_mixture(mixture: &GaussianMixture, lo: [f64; 2], hi: [f64; 2], n: usize) -> Result<Self> {
        let mut g = Self {
            lo,
            hi,
            nx: n,
            ny: n,
            log_mass: Vec::new(),
            log_partition: 0.0,
        };
        let w = (0..n * n)
            .map(|c| mixture.log_density(g.cell_center(c)).max(LOG_FLOOR.ln()))
            .collect();
        g = Self::from_log_weights(lo, hi, n, n, w)?;
        Ok(g)
    }

    /// The 201×201 grid over [-5, 5]².
    pub fn standard(mixture: &GaussianMixture) -> Result<Self> {
        Self::from_mixture(mixture, [-5.0, -5.0], [5.0, 5.0], 201)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = (cell % self.nx, cell / self.nx);
        let coord = |i: usize, n: usize, lo: f64, hi: f64| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        [coord(ix, self.nx, self.lo[0], self.hi[0]), coord(iy, self.ny, self.lo[1], self.hi[1])]
    }

    pub fn log_mass(&self, cell: usize) -> f64 {
        self.log_mass[cell]
    }

    pub fn log_masses(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_mass.iter().map(|v| v.exp()).collect()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.nx == other.nx && self.ny == other.ny
    }
}

/// Cellwise `π_ref · exp(R / β)`, renormalized.
pub fn optimal_grid_solution(reference: &GridDensity, reward: &RewardSpec, beta: f64) -> Result<GridDensity> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive and finite, got {beta}")));
    }
    let w = (0..reference.len())
        .map(|c| reference.log_mass(c) + reward.evaluate(reference.cell_center(c)) / beta)
        .collect();
    GridDensity::from_log_weights(reference.lo, reference.hi, reference.nx, reference.ny, w)
}

/// Largest relative error of `p*(a)/p*(b)` against
/// `π_ref(a)/π_ref(b) · exp((R(a) - R(b)) / β)` over random cell pairs.
/// Cells whose reference mass is below 1e-12 are redrawn.
pub fn verify_proposition1(
    p_star: &GridDensity,
    reference: &GridDensity,
    reward: &RewardSpec,
    beta: f64,
    pairs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if !p_star.same_grid(reference) {
        return Err(Error::Config("densities live on different grids".into()));
    }
    let floor = 1e-12f64.ln();
    if reference.log_masses().iter().all(|&v| v < floor) {
        return Err(Error::Numeric("no grid cell has reference mass above 1e-12".into()));
    }
    let draw = |rng: &mut Rng| loop {
        let c = rng.below(reference.len());
        if reference.log_mass(c) >= floor {
            return c;
        }
    };
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (a, b) = (draw(rng), draw(rng));
        let lhs = p_star.log_mass(a) - p_star.log_mass(b);
        let rhs = reference.log_mass(a) - reference.log_mass(b)
            + (reward.evaluate(reference.cell_center(a)) - reward.evaluate(reference.cell_center(b))) / beta;
        worst = worst.max((lhs - rhs).exp_m1().abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::{Bump, RewardRole};

    #[test]
    fn two_cell_closed_form() {
        let beta = 0.3;
        let r = RewardSpec::new(vec![Bump::new([1.0, 0.0], beta * 3f64.ln(), 1e-3)], 0.0, RewardRole::Proxy).unwrap();
        let reference = GridDensity::from_log_weights([0.0, 0.0], [1.0, 0.0], 2, 1, vec![0.5f64.ln(); 2]).unwrap();
        let p = optimal_grid_solution(&reference, &r, beta).unwrap().values();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn constant_reward_keeps_reference() {
        let m = GaussianMixture::fig3();
        let reference = GridDensity::from_mixture(&m, [-5.0, -5.0], [5.0, 5.0], 41).unwrap();
        let p = optimal_grid_solution(&reference, &RewardSpec::constant(2.5), 0.01).unwrap();
        for (a, b) in p.values().iter().zip(reference.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
