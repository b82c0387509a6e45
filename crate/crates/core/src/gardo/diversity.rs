use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// `x - anchor`.
    Identity,
    /// `cos(Ω (x - anchor) + φ)` with Gaussian `Ω`; cosine similarity of these
    /// features approximates a Gaussian kernel of the configured length scale.
    RandomProjection,
}

impl FeatureKind {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Identity => "identity",
            FeatureKind::RandomProjection => "random-projection",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(FeatureKind::Identity),
            "random-projection" => Some(FeatureKind::RandomProjection),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapConfig {
    pub kind: FeatureKind,
    pub anchor: [f64; 2],
    pub dim: usize,
    pub length_scale: f64,
}

impl Default for FeatureMapConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::RandomProjection,
            anchor: [5.0, 5.0],
            dim: 64,
            length_scale: 1.0,
        }
    }
}

/// Sample embedding used by the diversity score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    pub anchor: [f64; 2],
    pub projection: Option<Matrix>,
    pub phases: Vec<f64>,
    pub output_dim: usize,
}

impl FeatureMap {
    pub fn identity(anchor: [f64; 2]) -> Self {
        Self {
            kind: FeatureKind::Identity,
            anchor,
            projection: None,
            phases: Vec::new(),
            output_dim: 2,
        }
    }

    pub fn random_projection(anchor: [f64; 2], dim: usize, length_scale: f64, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || !(length_scale > 0.0) {
            return Err(Error::Config(format!(
                "random projection needs dim > 0 and length scale > 0 (got {dim}, {length_scale})"
            )));
        }
        let projection = Matrix::from_fn(dim, 2, |_, _| rng.normal() / length_scale);
        let phases = (0..dim)
            .map(|_| 2.0 * std::f64::consts::PI * rng.uniform())
            .collect();
        Ok(Self {
            kind: FeatureKind::RandomProjection,
            anchor,
            projection: Some(projection),
            phases,
            output_dim: dim,
        })
    }

    pub fn from_config(cfg: &FeatureMapConfig, rng: &mut Rng) -> Result<Self> {
        match cfg.kind {
            FeatureKind::Identity => Ok(Self::identity(cfg.anchor)),
            FeatureKind::RandomProjection => {
                Self::random_projection(cfg.anchor, cfg.dim, cfg.length_scale, rng)
            }
        }
    }

    pub fn embed(&self, x: [f64; 2]) -> Vec<f64> {
        let shifted = [x[0] - self.anchor[0], x[1] - self.anchor[1]];
        match &self.projection {
            None => shifted.to_vec(),
            Some(p) => {
                let mut out = vec![0.0; self.output_dim];
                p.affine_into(&shifted, &self.phases, &mut out);
                out.iter_mut().for_each(|v| *v = v.cos());
                out
            }
        }
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Cosine distance of each embedding to its nearest other embedding.
/// Zero-norm embeddings score 0.
pub fn nearest_neighbor_distances(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let g = embeddings.len();
    if g < 2 {
        return Err(Error::Usage(format!("diversity needs at least 2 samples, got {g}")));
    }
    let norms: Vec<f64> = embeddings
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = vec![0.0; g];
    for i in 0..g {
        if norms[i] == 0.0 {
            log::warn!("sample {i} has a zero-norm embedding; diversity set to 0");
            continue;
        }
        let mut best = f64::INFINITY;
        for j in 0..g {
            if j == i || norms[j] == 0.0 {
                continue;
            }
            best = best.min(cosine_distance(&embeddings[i], &embeddings[j]));
        }
        out[i] = if best.is_finite() { best } else { 0.0 };
    }
    Ok(out)
}

pub fn diversity_scores(samples: &[[f64; 2]], fmap: &FeatureMap) -> Result<Vec<f64>> {
    let embeddings: Vec<Vec<f64>> = samples.iter().map(|&x| fmap.embed(x)).collect();
    nearest_neighbor_distances(&embeddings)
}
