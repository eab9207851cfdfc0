//! The sequential slate policy abstraction.
//!
//! A policy chooses sub-actions one position at a time, without replacement.
//! The probability of a candidate at position `k` may depend on the context
//! and on every sub-action already placed. Estimators only ever need these
//! conditional probabilities, so real-data logging policies never have to be
//! available as code.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::data::Context;
use crate::error::{Error, Result};

/// Ordered actions drawn by a policy with the conditional probability used at
/// each draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSlate {
    pub actions: Vec<usize>,
    pub propensities: Vec<f64>,
}

/// A policy specialised to one context.
pub trait BoundPolicy {
    fn num_candidates(&self) -> usize;

    /// Writes the distribution over all candidates for the next position into
    /// `out` (length `num_candidates()`); chosen candidates get probability 0.
    fn next_distribution(&self, chosen: &[usize], out: &mut [f64]);

    /// Probability of placing `candidate` next after `chosen`.
    fn propensity(&self, chosen: &[usize], candidate: usize) -> f64 {
        let mut probs = vec![0.0; self.num_candidates()];
        self.next_distribution(chosen, &mut probs);
        probs[candidate]
    }

    fn sample_slate(&self, slate_size: usize, rng: &mut dyn RngCore) -> Result<SampledSlate> {
        let m = self.num_candidates();
        if slate_size == 0 {
            return Err(Error::EmptySlate);
        }
        if slate_size > m {
            return Err(Error::SlateTooLarge {
                slate_size,
                candidates: m,
            });
        }
        let mut actions = Vec::with_capacity(slate_size);
        let mut propensities = Vec::with_capacity(slate_size);
        let mut probs = vec![0.0; m];
        for _ in 0..slate_size {
            self.next_distribution(&actions, &mut probs);
            let pick = sample_index(&probs, rng);
            propensities.push(probs[pick]);
            actions.push(pick);
        }
        Ok(SampledSlate {
            actions,
            propensities,
        })
    }
}

/// A stochastic sequential slate policy.
pub trait Policy: Send + Sync {
    fn bind<'a>(&'a self, context: &'a Context) -> Result<Box<dyn BoundPolicy + 'a>>;

    /// Conditional probability of `candidate` at the position after
    /// `previous`. Already-chosen candidates have probability 0.
    fn propensity(&self, context: &Context, previous: &[usize], candidate: usize) -> Result<f64> {
        let m = context.num_candidates();
        if candidate >= m {
            return Err(Error::UnknownCandidate(format!("index {candidate}")));
        }
        if let Some(&bad) = previous.iter().find(|&&p| p >= m) {
            return Err(Error::UnknownCandidate(format!("index {bad}")));
        }
        Ok(self.bind(context)?.propensity(previous, candidate))
    }

    /// Same as [`Policy::propensity`] with identifiers instead of indices.
    fn propensity_of(&self, context: &Context, previous: &[&str], candidate: &str) -> Result<f64> {
        let resolve = |id: &str| {
            context
                .candidate_index(id)
                .ok_or_else(|| Error::UnknownCandidate(id.into()))
        };
        let prev = previous
            .iter()
            .map(|id| resolve(id))
            .collect::<Result<Vec<_>>>()?;
        self.propensity(context, &prev, resolve(candidate)?)
    }

    fn sample_slate(
        &self,
        context: &Context,
        slate_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<SampledSlate> {
        self.bind(context)?.sample_slate(slate_size, rng)
    }
}

/// Inverse-CDF draw from an unnormalised-by-rounding probability vector.
/// Falls back to the last index with positive mass when rounding leaves the
/// uniform draw beyond the cumulative total.
pub(crate) fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// True when the policy puts all mass on a single candidate at every position
/// reachable by following it. Returns that slate.
pub fn deterministic_slate(bound: &dyn BoundPolicy, slate_size: usize) -> Option<Vec<usize>> {
    let m = bound.num_candidates();
    let mut probs = vec![0.0; m];
    let mut chosen = Vec::with_capacity(slate_size);
    for _ in 0..slate_size.min(m) {
        bound.next_distribution(&chosen, &mut probs);
        let (idx, &p) = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        if (p - 1.0).abs() > 1e-12 {
            return None;
        }
        chosen.push(idx);
    }
    Some(chosen)
}
