//! Per-position importance weights and the effective sample size.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::data::{Dataset, ImpressionRef};
use crate::error::{Error, Result};
use crate::policy::{BoundPolicy, Policy};

/// Effective sample size `(Σw)² / Σw²` of a set of nonnegative weights.
///
/// For weights normalised to mean one (every RIPS weight vector is) this is
/// `N² / Σw²`. It is scale invariant and lies in `[1, N]`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidWeight(w));
        }
        sum += w;
        sum_sq += w * w;
    }
    if sum_sq <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(sum * sum / sum_sq)
}

/// `h(A_k | X, A_{1:k-1}) / π(A_k | X, A_{1:k-1})` for one impression, with the
/// target conditioned on the logged prefix. `position` is 0-indexed.
pub fn per_position_weight(
    impression: &ImpressionRef<'_>,
    target: &dyn Policy,
    position: usize,
) -> Result<f64> {
    let logged = impression.logging_propensities[position];
    if !(logged.is_finite() && logged > 0.0) {
        return Err(Error::InvalidPropensity {
            position: position + 1,
            value: logged,
        });
    }
    let bound = target.bind(impression.context)?;
    Ok(bound.propensity(
        &impression.actions[..position],
        impression.actions[position],
    ) / logged)
}

/// Weights `w_k^(n)` for every impression and position of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    /// Teacher-forced weights of `target` against the recorded logging
    /// propensities. The target is bound once per distinct context.
    pub fn compute(dataset: &Dataset, target: &dyn Policy) -> Result<Self> {
        let bound: Vec<Box<dyn BoundPolicy + '_>> = dataset
            .contexts()
            .iter()
            .map(|c| target.bind(c))
            .collect::<Result<_>>()?;
        let k = dataset.slate_size();
        let mut values = Vec::with_capacity(dataset.len() * k);
        for imp in dataset.impressions() {
            let policy = &bound[imp.context_index];
            for pos in 0..k {
                let h = policy.propensity(&imp.actions[..pos], imp.actions[pos]);
                values.push(h / imp.logging_propensities[pos]);
            }
        }
        Ok(Self {
            n: dataset.len(),
            k,
            values,
        })
    }

    /// Build from explicit rows (one row of `K` weights per impression).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::EmptySlate);
        }
        let mut values = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::SlateSizeMismatch {
                    index: i,
                    expected: k,
                    found: row.len(),
                });
            }
            for &w in row {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidWeight(w));
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n, k, values })
    }

    pub fn num_impressions(&self) -> usize {
        self.n
    }

    pub fn slate_size(&self) -> usize {
        self.k
    }

    pub fn get(&self, n: usize, position: usize) -> f64 {
        self.values[n * self.k + position]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    /// Weights of every impression at one position.
    pub fn column(&self, position: usize) -> Vec<f64> {
        (0..self.n).map(|n| self.get(n, position)).collect()
    }

    fn needs_log_space(&self) -> bool {
        self.values
            .iter()
            .any(|&w| w != 0.0 && !(1e-6..=1e6).contains(&w))
    }

    /// For every position `k`, the products `∏_{j≤k} w_j^(n)` divided by their
    /// sum over impressions. Returns `N × K` values, impression-major.
    ///
    /// Products run in log space when any weight is outside `[1e-6, 1e6]`.
    /// Fails with [`Error::ZeroNormalizer`] naming the first position whose
    /// cumulative mass is zero.
    pub fn normalized_cumulative_products(&self) -> Result<Vec<f64>> {
        let (n, k) = (self.n, self.k);
        let mut out = alloc::vec![0.0; n * k];
        if self.needs_log_space() {
            let mut logs = alloc::vec![0.0; n];
            for pos in 0..k {
                let mut max = f64::NEG_INFINITY;
                for (i, l) in logs.iter_mut().enumerate() {
                    *l += libm::log(self.get(i, pos));
                    if *l > max {
                        max = *l;
                    }
                }
                if max == f64::NEG_INFINITY {
                    return Err(Error::ZeroNormalizer {
                        position: pos + 1,
                        lookback: pos,
                    });
                }
                let total: f64 = logs.iter().map(|&l| libm::exp(l - max)).sum();
                for (i, &l) in logs.iter().enumerate() {
                    out[i * k + pos] = libm::exp(l - max) / total;
                }
            }
        } else {
            let mut prods = alloc::vec![1.0; n];
            for pos in 0..k {
                let mut total = 0.0;
                for (i, p) in prods.iter_mut().enumerate() {
                    *p *= self.get(i, pos);
                    total += *p;
                }
                if total <= 0.0 {
                    return Err(Error::ZeroNormalizer {
                        position: pos + 1,
                        lookback: pos,
                    });
                }
                for (i, &p) in prods.iter().enumerate() {
                    out[i * k + pos] = p / total;
                }
            }
        }
        Ok(out)
    }

    /// Unnormalised full-slate products `∏_k w_k^(n)`, with zero for any
    /// impression containing a zero weight.
    pub fn slate_products(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().product()).collect()
    }
}
