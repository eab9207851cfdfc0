//! Reward interaction IPS.
//!
//! Rewards are assumed to follow a Markov chain down the slate: `R_k` depends
//! on the context, `A_k` and `R_{k-1}`. The reweighting factor of the reward
//! at position `k` is then an accumulated, normalised product of the weights
//! at positions `1..=k`:
//!
//! ```text
//! γ_0 = 1,   γ_k^(n) = N γ_{k-1}^(n) w_k^(n) / Σ_m γ_{k-1}^(m) w_k^(m)
//! V̂ = (1/N) Σ_n Σ_k γ_k^(n) R_k^(n)
//! ```
//!
//! The normalisers telescope, so `γ_k^(n) / N` is the cumulative product
//! `∏_{j≤k} w_j^(n)` over its sum across impressions ([`rips_closed_form`]).
//!
//! [`rips`] additionally caps how far back each position accumulates: at
//! position `k` it starts from the position's own normalised weight and folds
//! in `w_{k-1}, w_{k-2}, …` one at a time while the effective sample size
//! stays above `N·t` and keeps decreasing.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_shape, diagnostic_ess, EstimateReport, LookbackStep};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::weights::{effective_sample_size, WeightMatrix};

/// Lookback threshold for [`rips`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipsConfig {
    threshold: f64,
}

impl RipsConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.01;

    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidThreshold(threshold));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl Default for RipsConfig {
    fn default() -> Self {
        Self {
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }
}

/// Uncapped accumulated weights `γ_k^(n)` from the recursion, `N × K`
/// impression-major. Each position's column has mean one.
pub fn accumulated_weights(weights: &WeightMatrix) -> Result<Vec<f64>> {
    let (n, k) = (weights.num_impressions(), weights.slate_size());
    let mut gamma = vec![1.0; n];
    let mut out = vec![0.0; n * k];
    for pos in 0..k {
        let mut total = 0.0;
        for (i, g) in gamma.iter_mut().enumerate() {
            *g *= weights.get(i, pos);
            total += *g;
        }
        if total.is_nan() || total <= 0.0 {
            return Err(Error::ZeroNormalizer {
                position: pos + 1,
                lookback: pos,
            });
        }
        let scale = n as f64 / total;
        for (i, g) in gamma.iter_mut().enumerate() {
            *g *= scale;
            out[i * k + pos] = *g;
        }
    }
    Ok(out)
}

/// RIPS value through the `γ` recursion, without lookback capping.
pub fn rips_recursive(dataset: &Dataset, weights: &WeightMatrix) -> Result<f64> {
    check_shape(dataset, weights)?;
    let gamma = accumulated_weights(weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let mut value = 0.0;
    for i in 0..n {
        for pos in 0..k {
            value += gamma[i * k + pos] * dataset.reward(i, pos);
        }
    }
    Ok(value / n as f64)
}

/// Closed-form RIPS:
/// `Σ_n Σ_k [∏_{j≤k} w_j^(n) / Σ_m ∏_{j≤k} w_j^(m)] R_k^(n)`.
pub fn rips_closed_form(dataset: &Dataset, weights: &WeightMatrix) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let factors = weights.normalized_cumulative_products()?;
    let mut per_position = vec![0.0; k];
    for i in 0..n {
        for (pos, acc) in per_position.iter_mut().enumerate() {
            *acc += factors[i * k + pos] * dataset.reward(i, pos);
        }
    }
    let trace = (0..k)
        .map(|pos| {
            let column: Vec<f64> = (0..n).map(|i| factors[i * k + pos]).collect();
            vec![LookbackStep {
                lookback: pos,
                ess: diagnostic_ess(&column),
                accepted: true,
            }]
        })
        .collect();
    let report = EstimateReport::from_positions(per_position, trace, (0..k).collect(), n);

    #[cfg(debug_assertions)]
    {
        // The telescoped closed form must agree with the recursion. The
        // recursion can underflow where the log-space closed form does not,
        // so only compare when it succeeds.
        if let Ok(recursive) = rips_recursive(dataset, weights) {
            let scale = report.value.abs().max(1.0);
            debug_assert!(
                (recursive - report.value).abs() <= 1e-9 * scale,
                "closed form {} disagrees with recursion {}",
                report.value,
                recursive
            );
        }
    }
    Ok(report)
}

/// RIPS with ESS-gated lookback capping.
///
/// For each position the position's own normalised weight is always used
/// (lookback 0). Each further lookback step multiplies in the weight one
/// position earlier and renormalises; the proposal is kept only if its ESS is
/// above `N·t` and strictly below the ESS of the weights it would replace.
/// The first rejected proposal ends the search at that position.
pub fn rips(
    dataset: &Dataset,
    weights: &WeightMatrix,
    config: &RipsConfig,
) -> Result<EstimateReport> {
    check_shape(dataset, weights)?;
    let (n, k) = (dataset.len(), dataset.slate_size());
    let floor = n as f64 * config.threshold;
    let mut per_position = vec![0.0; k];
    let mut trace = Vec::with_capacity(k);
    let mut lookbacks = Vec::with_capacity(k);
    let mut gamma = vec![0.0; n];
    let mut proposal = vec![0.0; n];

    for (pos, acc) in per_position.iter_mut().enumerate() {
        gamma.iter_mut().for_each(|g| *g = 1.0);
        let mut gamma_ess = n as f64;
        let mut steps = Vec::new();
        let mut chosen = 0;

        for lookback in 0..=pos {
            let source = pos - lookback;
            let mut total = 0.0;
            for (i, (p, &g)) in proposal.iter_mut().zip(&gamma).enumerate() {
                *p = g * weights.get(i, source);
                total += *p;
            }
            if !(total > 0.0 && total.is_finite()) {
                if lookback == 0 {
                    return Err(Error::ZeroNormalizer {
                        position: pos + 1,
                        lookback,
                    });
                }
                steps.push(LookbackStep {
                    lookback,
                    ess: 0.0,
                    accepted: false,
                });
                break;
            }
            let scale = n as f64 / total;
            proposal.iter_mut().for_each(|p| *p *= scale);
            let ess = effective_sample_size(&proposal)?;
            let accepted = lookback == 0 || (ess > floor && ess < gamma_ess);
            steps.push(LookbackStep {
                lookback,
                ess,
                accepted,
            });
            if !accepted {
                break;
            }
            core::mem::swap(&mut gamma, &mut proposal);
            gamma_ess = ess;
            chosen = lookback;
        }

        *acc = gamma
            .iter()
            .enumerate()
            .map(|(i, &g)| g * dataset.reward(i, pos))
            .sum::<f64>()
            / n as f64;
        trace.push(steps);
        lookbacks.push(chosen);
    }
    Ok(EstimateReport::from_positions(
        per_position,
        trace,
        lookbacks,
        n,
    ))
}
