use crate::error::{Error, Result};

/// Floor on the group standard deviation; keeps constant groups at zero
/// advantage instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Group-relative advantages. With `use_std` the centered rewards are divided
/// by the population standard deviation of the group.
pub fn compute_advantages(rewards: &[f64], use_std: bool) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::Usage(format!("group size must be at least 2, got {g}")));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    if !use_std {
        return Ok(centered);
    }
    let var = centered.iter().map(|c| c * c).sum::<f64>() / g as f64;
    let std = var.sqrt().max(STD_FLOOR);
    Ok(centered.into_iter().map(|c| c / std).collect())
}

/// Scale positive advantages by the matching diversity score; leave the rest.
pub fn shape_advantages(advantages: &[f64], diversity: &[f64]) -> Result<Vec<f64>> {
    if advantages.len() != diversity.len() {
        return Err(Error::Usage(format!(
            "advantage/diversity length mismatch: {} vs {}",
            advantages.len(),
            diversity.len()
        )));
    }
    Ok(advantages
        .iter()
        .zip(diversity)
        .map(|(&a, &d)| if a > 0.0 { a * d } else { a })
        .collect())
}
