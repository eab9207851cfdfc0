//! On-policy mean and the classic importance-sampling estimators.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_shape, diagnostic_ess, EstimateReport, LookbackStep};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

fn step(lookback: usize, ess: f64) -> Vec<LookbackStep> {
    vec![LookbackStep {
        lookback,
        ess,
        accepted: true,
    }]
}

/// `(1/N) Σ_n Σ_k R_k^(n)`.
pub fn on_policy_mean(dataset: &Dataset) -> Result<EstimateReport> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = dataset.slate_size();
    let mut per_position = vec![0.0; k];
    for imp in dataset.impressions() {
        for (acc, &r) in per_position.iter_mut().zip(imp.rewards) {
            *acc += r;
        }
    }
    per_position.iter_mut().for_each(|v| *v /= n as f64);
    Ok(EstimateReport::from_positions(
        per_position,
        (0..k).map(|_| step(0, n as f64)).collect(),
        vec![0; k],
        n,
    ))
}

/// Full-slate IPS: `(1/N) Σ_n [∏_k w_k^(n)] Σ_k R_k^(n)`.
pub fn ips(dataset: &Dataset, weights: &WeightMatrix) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let products = weights.slate_products();
    let mut per_position = vec![0.0; k];
    for (i, &w) in products.iter().enumerate() {
        for (pos, acc) in per_position.iter_mut().enumerate() {
            *acc += w * dataset.reward(i, pos);
        }
    }
    per_position.iter_mut().for_each(|v| *v /= n as f64);
    let ess = diagnostic_ess(&products);
    Ok(EstimateReport::from_positions(
        per_position,
        (0..k).map(|pos| step(pos, ess)).collect(),
        (0..k).collect(),
        n,
    ))
}

/// Self-normalised full-slate weights `∏_k w_k^(n) / Σ_m ∏_k w_k^(m)`.
///
/// Products run in log space when any weight is outside `[1e-6, 1e6]`.
pub fn nis_factors(weights: &WeightMatrix) -> Result<Vec<f64>> {
    let n = weights.num_impressions();
    let extreme = (0..n)
        .flat_map(|i| weights.row(i).iter())
        .any(|&w| w != 0.0 && !(1e-6..=1e6).contains(&w));
    let mut factors: Vec<f64> = if extreme {
        let logs: Vec<f64> = (0..n)
            .map(|i| weights.row(i).iter().map(|&w| libm::log(w)).sum())
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoOverlap);
        }
        logs.iter().map(|&l| libm::exp(l - max)).collect()
    } else {
        weights.slate_products()
    };
    let total: f64 = factors.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::NoOverlap);
    }
    factors.iter_mut().for_each(|f| *f /= total);
    Ok(factors)
}

/// Normalised IPS: `Σ_n [∏_k w_k^(n) / Σ_m ∏_k w_k^(m)] Σ_k R_k^(n)`.
pub fn nis(dataset: &Dataset, weights: &WeightMatrix) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let k = dataset.slate_size();
    let factors = nis_factors(weights)?;
    let mut per_position = vec![0.0; k];
    for (i, &f) in factors.iter().enumerate() {
        for (pos, acc) in per_position.iter_mut().enumerate() {
            *acc += f * dataset.reward(i, pos);
        }
    }
    let ess = diagnostic_ess(&factors);
    Ok(EstimateReport::from_positions(
        per_position,
        (0..k).map(|pos| step(pos, ess)).collect(),
        (0..k).collect(),
        dataset.len(),
    ))
}

/// Independent IPS: `(1/N) Σ_n Σ_k w_k^(n) R_k^(n)`.
pub fn iips(dataset: &Dataset, weights: &WeightMatrix) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let mut per_position = vec![0.0; k];
    let mut trace = Vec::with_capacity(k);
    for (pos, acc) in per_position.iter_mut().enumerate() {
        let column = weights.column(pos);
        *acc = column
            .iter()
            .enumerate()
            .map(|(i, &w)| w * dataset.reward(i, pos))
            .sum::<f64>()
            / n as f64;
        trace.push(step(0, diagnostic_ess(&column)));
    }
    Ok(EstimateReport::from_positions(
        per_position,
        trace,
        vec![0; k],
        n,
    ))
}

/// IIPS with each position's weights rescaled to mean one:
/// `Σ_k (1/N) Σ_n (N w_k^(n) / Σ_m w_k^(m)) R_k^(n)`.
pub fn iips_normalized(dataset: &Dataset, weights: &WeightMatrix) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let mut per_position = vec![0.0; k];
    let mut trace = Vec::with_capacity(k);
    for (pos, acc) in per_position.iter_mut().enumerate() {
        let column = weights.column(pos);
        let total: f64 = column.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::ZeroNormalizer {
                position: pos + 1,
                lookback: 0,
            });
        }
        let scale = n as f64 / total;
        *acc = column
            .iter()
            .enumerate()
            .map(|(i, &w)| scale * w * dataset.reward(i, pos))
            .sum::<f64>()
            / n as f64;
        trace.push(step(0, diagnostic_ess(&column)));
    }
    Ok(EstimateReport::from_positions(
        per_position,
        trace,
        vec![0; k],
        n,
    ))
}
