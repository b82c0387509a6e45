use crate::error::{Error, Result};

/// Fraction of the batch each entry strictly beats: `(1/B) Σ_{j≠i} 1[y_i > y_j]`.
pub fn win_rates(values: &[f64]) -> Vec<f64> {
    let b = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|&v| sorted.partition_point(|&s| s < v) as f64 / b as f64)
        .collect()
}

/// Proxy win rate minus the mean auxiliary win rate, per sample.
pub fn estimate_uncertainty(proxy: &[f64], auxiliaries: &[Vec<f64>]) -> Result<Vec<f64>> {
    let b = proxy.len();
    if b < 2 {
        return Err(Error::Usage(format!("uncertainty needs a batch of at least 2, got {b}")));
    }
    if auxiliaries.is_empty() {
        return Err(Error::Usage("uncertainty needs at least one auxiliary reward".into()));
    }
    if let Some(bad) = auxiliaries.iter().find(|a| a.len() != b) {
        return Err(Error::Usage(format!(
            "auxiliary batch length {} does not match proxy length {b}",
            bad.len()
        )));
    }
    if proxy.iter().chain(auxiliaries.iter().flatten()).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN reward in uncertainty batch".into()));
    }
    let mut u = win_rates(proxy);
    let k = auxiliaries.len() as f64;
    for aux in auxiliaries {
        for (ui, w) in u.iter_mut().zip(win_rates(aux)) {
            *ui -= w / k;
        }
    }
    Ok(u)
}

/// Batch mean of [`estimate_uncertainty`], computed from integer win counts.
///
/// Without ties every reward model's win rates sum to the same integer, so
/// the mean is exactly zero; summing the per-sample floats instead would feed
/// rounding noise into the `k` adaptation.
pub fn batch_mean_uncertainty(proxy: &[f64], auxiliaries: &[Vec<f64>]) -> Result<f64> {
    estimate_uncertainty(proxy, auxiliaries)?;
    let wins = |values: &[f64]| -> i64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        values.iter().map(|&v| sorted.partition_point(|&s| s < v) as i64).sum()
    };
    let k = auxiliaries.len() as i64;
    let numerator = k * wins(proxy) - auxiliaries.iter().map(|a| wins(a)).sum::<i64>();
    let b = proxy.len() as f64;
    Ok(numerator as f64 / (k as f64 * b * b))
}
