//! Pseudoinverse (PI) estimator.
//!
//! PI treats the slate reward as an unknown linear function of slot-item
//! indicators `1_A ∈ {0,1}^{K·M}` and estimates
//!
//! ```text
//! V̂ = (1/N) Σ_n E_h[1_A | X_n]ᵀ Γ_{X_n}^† 1_{A_n} Σ_k R_k^(n),   Γ_X = E_π[1_A 1_Aᵀ | X]
//! ```
//!
//! [`pi_uniform`] covers uniformly random logging of full permutations
//! (`K == M`), where `Γ` has a closed form. [`pi_mc`] estimates `Γ_X` by
//! sampling a known logging policy and is experimental.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{diagnostic_ess, EstimateReport, LookbackStep};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policy::{deterministic_slate, BoundPolicy, Policy};
use crate::seed;

/// Largest candidate count for which a stochastic target's slot marginals
/// are computed by exhaustive enumeration.
pub const ENUMERATION_LIMIT: usize = 6;

/// Relative singular-value cutoff for the pseudoinverse.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    /// Draws used for Monte-Carlo estimates of `E_h[1_A]` and, for
    /// [`pi_mc`], of `Γ`.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            mc_samples: 10_000,
            seed: 0,
        }
    }
}

/// Slot-item indicator of a slate: entry `k·M + j` is one iff candidate `j`
/// sits at position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlateIndicator {
    num_candidates: usize,
    actions: Vec<usize>,
}

impl SlateIndicator {
    pub fn new(actions: &[usize], num_candidates: usize) -> Result<Self> {
        for (pos, &a) in actions.iter().enumerate() {
            if a >= num_candidates || actions[..pos].contains(&a) {
                return Err(Error::InvalidConfig(format!(
                    "slate {actions:?} is not a without-replacement draw from {num_candidates} candidates"
                )));
            }
        }
        Ok(Self {
            num_candidates,
            actions: actions.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.actions.len() * self.num_candidates
    }

    /// Indices of the `K` nonzero entries.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(move |(pos, &a)| pos * self.num_candidates + a)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for i in self.ones() {
            v[i] = 1.0;
        }
        v
    }
}

/// `Γ = E_π[1_A 1_Aᵀ]` for uniformly random slates of `slate_size` out of
/// `num_candidates`: `1/M` on the diagonal, `1/(M(M-1))` between distinct
/// items at distinct slots, zero otherwise.
pub fn uniform_gamma(slate_size: usize, num_candidates: usize) -> DMatrix<f64> {
    let (k, m) = (slate_size, num_candidates);
    let d = k * m;
    let diag = 1.0 / m as f64;
    let cross = if m > 1 {
        1.0 / (m as f64 * (m - 1) as f64)
    } else {
        0.0
    };
    DMatrix::from_fn(d, d, |r, c| {
        let (ra, ri) = (r / m, r % m);
        let (ca, ci) = (c / m, c % m);
        if r == c {
            diag
        } else if ra != ca && ri != ci {
            cross
        } else {
            0.0
        }
    })
}

/// Moore-Penrose pseudoinverse through the SVD, dropping singular values
/// below `PINV_RCOND · σ_max`.
pub fn pseudo_inverse(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = matrix.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RCOND * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut inv_sigma = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            inv_sigma[i] = 1.0 / s;
        }
    }
    v_t.transpose() * DMatrix::from_diagonal(&inv_sigma) * u.transpose()
}

/// `E_h[1_A | X]`: the probability of each candidate at each position.
/// Exact for deterministic policies and for `M ≤ ENUMERATION_LIMIT`,
/// Monte-Carlo otherwise.
pub fn slot_marginals(
    bound: &dyn BoundPolicy,
    slate_size: usize,
    mc_samples: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let m = bound.num_candidates();
    if slate_size > m {
        return Err(Error::SlateTooLarge {
            slate_size,
            candidates: m,
        });
    }
    let mut q = vec![0.0; slate_size * m];
    if let Some(slate) = deterministic_slate(bound, slate_size) {
        for (pos, &a) in slate.iter().enumerate() {
            q[pos * m + a] = 1.0;
        }
    } else if m <= ENUMERATION_LIMIT {
        let mut chosen = Vec::with_capacity(slate_size);
        enumerate_marginals(bound, slate_size, &mut chosen, 1.0, &mut q);
    } else {
        if mc_samples == 0 {
            return Err(Error::NotEnumerable { candidates: m });
        }
        let mut rng = seed::rng(rng_seed);
        let inc = 1.0 / mc_samples as f64;
        for _ in 0..mc_samples {
            let s = bound.sample_slate(slate_size, &mut rng)?;
            for (pos, &a) in s.actions.iter().enumerate() {
                q[pos * m + a] += inc;
            }
        }
    }
    Ok(q)
}

fn enumerate_marginals(
    bound: &dyn BoundPolicy,
    slate_size: usize,
    chosen: &mut Vec<usize>,
    prob: f64,
    q: &mut [f64],
) {
    let m = bound.num_candidates();
    let pos = chosen.len();
    let mut dist = vec![0.0; m];
    bound.next_distribution(chosen, &mut dist);
    for (c, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let mass = prob * p;
        q[pos * m + c] += mass;
        if pos + 1 < slate_size {
            chosen.push(c);
            enumerate_marginals(bound, slate_size, chosen, mass, q);
            chosen.pop();
        }
    }
}

/// Per-impression scalar weight `Σ_k v_X[k·M + A_k]` from per-context
/// projection vectors `v_X = Γ_X^† E_h[1_A | X]`.
fn impression_weights(dataset: &Dataset, projections: &[Option<Vec<f64>>]) -> Vec<f64> {
    dataset
        .impressions()
        .map(|imp| {
            let v = projections[imp.context_index]
                .as_ref()
                .expect("projection computed for every context in use");
            let m = imp.context.num_candidates();
            imp.actions
                .iter()
                .enumerate()
                .map(|(pos, &a)| v[pos * m + a])
                .sum()
        })
        .collect()
}

fn evaluate_projected(dataset: &Dataset, projections: &[Option<Vec<f64>>]) -> EstimateReport {
    let (n, k) = (dataset.len(), dataset.slate_size());
    let weights = impression_weights(dataset, projections);
    let mut per_position = vec![0.0; k];
    for (imp, &w) in dataset.impressions().zip(&weights) {
        for (acc, &r) in per_position.iter_mut().zip(imp.rewards) {
            *acc += w * r;
        }
    }
    per_position.iter_mut().for_each(|v| *v /= n as f64);
    let magnitudes: Vec<f64> = weights.iter().map(|&w| libm::fabs(w)).collect();
    let ess = diagnostic_ess(&magnitudes);
    let trace = (0..k)
        .map(|_| {
            vec![LookbackStep {
                lookback: 0,
                ess,
                accepted: true,
            }]
        })
        .collect();
    EstimateReport::from_positions(per_position, trace, vec![0; k], n)
}

fn contexts_in_use(dataset: &Dataset) -> Vec<bool> {
    let mut used = vec![false; dataset.contexts().len()];
    for imp in dataset.impressions() {
        used[imp.context_index] = true;
    }
    used
}

fn check_uniform_permutation_logs(dataset: &Dataset) -> Result<()> {
    let k = dataset.slate_size();
    for (n, imp) in dataset.impressions().enumerate() {
        let m = imp.context.num_candidates();
        if m != k {
            return Err(Error::PiPreconditions(format!(
                "impression {n}: {m} candidates but slate size {k}"
            )));
        }
        for (pos, &p) in imp.logging_propensities.iter().enumerate() {
            let uniform = 1.0 / (m - pos) as f64;
            if libm::fabs(p - uniform) > 1e-9 {
                return Err(Error::PiPreconditions(format!(
                    "impression {n}: logging propensity {p} at position {} is not uniform",
                    pos + 1
                )));
            }
        }
    }
    Ok(())
}

fn uniform_projections(
    dataset: &Dataset,
    target: &dyn Policy,
    config: &PiConfig,
) -> Result<Vec<Option<Vec<f64>>>> {
    check_uniform_permutation_logs(dataset)?;
    let k = dataset.slate_size();
    let mut pinv_by_size: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    let used = contexts_in_use(dataset);
    let mut projections = Vec::with_capacity(used.len());
    for (ci, ctx) in dataset.contexts().iter().enumerate() {
        if !used[ci] {
            projections.push(None);
            continue;
        }
        let m = ctx.num_candidates();
        let pinv = pinv_by_size
            .entry(m)
            .or_insert_with(|| pseudo_inverse(&uniform_gamma(k, m)));
        let bound = target.bind(ctx)?;
        let q = slot_marginals(
            &*bound,
            k,
            config.mc_samples,
            seed::derive(config.seed, &[seed::stream::PI, ci as u64]),
        )?;
        let v = &*pinv * DVector::from_vec(q);
        projections.push(Some(v.iter().copied().collect()));
    }
    Ok(projections)
}

/// PI under uniformly random logging of full permutations (`K == M`).
pub fn pi_uniform(
    dataset: &Dataset,
    target: &dyn Policy,
    config: &PiConfig,
) -> Result<EstimateReport> {
    let projections = uniform_projections(dataset, target, config)?;
    Ok(evaluate_projected(dataset, &projections))
}

/// The scalar weight PI applies to each impression's slate reward under
/// uniform logging; the estimate is the mean of `weight · Σ_k R_k`.
pub fn pi_uniform_weights(
    dataset: &Dataset,
    target: &dyn Policy,
    config: &PiConfig,
) -> Result<Vec<f64>> {
    let projections = uniform_projections(dataset, target, config)?;
    Ok(impression_weights(dataset, &projections))
}

/// `Γ_X` estimated from `samples` slates drawn from the logging policy.
pub fn monte_carlo_gamma(
    bound: &dyn BoundPolicy,
    slate_size: usize,
    samples: usize,
    rng_seed: u64,
) -> Result<DMatrix<f64>> {
    let m = bound.num_candidates();
    let d = slate_size * m;
    let mut gamma = DMatrix::zeros(d, d);
    let mut rng = seed::rng(rng_seed);
    let inc = 1.0 / samples as f64;
    for _ in 0..samples {
        let s = bound.sample_slate(slate_size, &mut rng)?;
        let ones: Vec<usize> = SlateIndicator::new(&s.actions, m)?.ones().collect();
        for &r in &ones {
            for &c in &ones {
                gamma[(r, c)] += inc;
            }
        }
    }
    Ok(gamma)
}

/// PI with `Γ_X` estimated by sampling the known logging policy. There is no
/// closed form for `Γ` under general logging, so this is experimental.
pub fn pi_mc(
    dataset: &Dataset,
    target: &dyn Policy,
    logging: &dyn Policy,
    config: &PiConfig,
) -> Result<EstimateReport> {
    if config.mc_samples == 0 {
        return Err(Error::InvalidConfig("pi_mc needs mc_samples > 0".into()));
    }
    let k = dataset.slate_size();
    let used = contexts_in_use(dataset);
    let mut projections = Vec::with_capacity(used.len());
    for (ci, ctx) in dataset.contexts().iter().enumerate() {
        if !used[ci] {
            projections.push(None);
            continue;
        }
        let log_bound: Box<dyn BoundPolicy + '_> = logging.bind(ctx)?;
        let gamma = monte_carlo_gamma(
            &*log_bound,
            k,
            config.mc_samples,
            seed::derive(config.seed, &[seed::stream::PI, ci as u64, 1]),
        )?;
        let target_bound = target.bind(ctx)?;
        let q = slot_marginals(
            &*target_bound,
            k,
            config.mc_samples,
            seed::derive(config.seed, &[seed::stream::PI, ci as u64, 2]),
        )?;
        let v = pseudo_inverse(&gamma) * DVector::from_vec(q);
        projections.push(Some(v.iter().copied().collect()));
    }
    Ok(evaluate_projected(dataset, &projections))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Context, DatasetBuilder};
    use crate::policies::UniformRandomPolicy;
    use alloc::string::ToString;

    #[test]
    fn indicator_layout() {
        let s = SlateIndicator::new(&[2, 0], 3).unwrap();
        assert_eq!(s.to_dense(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(SlateIndicator::new(&[1, 1], 3).is_err());
        assert!(SlateIndicator::new(&[3], 3).is_err());
    }

    #[test]
    fn pseudo_inverse_properties() {
        let g = uniform_gamma(3, 3);
        let p = pseudo_inverse(&g);
        let gpg = &g * &p * &g;
        assert!((gpg - &g).abs().max() < 1e-10);
        let pgp = &p * &g * &p;
        assert!((pgp - &p).abs().max() < 1e-8);
    }

    #[test]
    fn uniform_marginals_by_enumeration() {
        let ctx = Context::new("x", ["a", "b", "c"].iter().map(|s| s.to_string()).collect());
        let b = UniformRandomPolicy.bind(&ctx).unwrap();
        let q = slot_marginals(&*b, 3, 0, 0).unwrap();
        assert!(q.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn preconditions_are_enforced() {
        let ctx = Context::new("x", ["a", "b", "c"].iter().map(|s| s.to_string()).collect());
        let mut b = DatasetBuilder::default();
        let ci = b.add_context(&ctx).unwrap();
        b.push_indexed(ci, &[0, 1], &[1.0 / 3.0, 0.5], &[1.0, 0.0])
            .unwrap();
        let ds = b.build().unwrap();
        assert!(matches!(
            pi_uniform(&ds, &UniformRandomPolicy, &PiConfig::default()),
            Err(Error::PiPreconditions(_))
        ));

        let mut b = DatasetBuilder::default();
        let ci = b.add_context(&ctx).unwrap();
        b.push_indexed(ci, &[0, 1, 2], &[0.5, 0.5, 1.0], &[1.0, 0.0, 0.0])
            .unwrap();
        let ds = b.build().unwrap();
        assert!(matches!(
            pi_uniform(&ds, &UniformRandomPolicy, &PiConfig::default()),
            Err(Error::PiPreconditions(_))
        ));
    }

    #[test]
    fn on_policy_uniform_is_identity() {
        let ctx = Context::new(
            "x",
            ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
        );
        let mut b = DatasetBuilder::default();
        let ci = b.add_context(&ctx).unwrap();
        let mut rng = seed::rng(3);
        let bound = UniformRandomPolicy.bind(&ctx).unwrap();
        let mut total = 0.0;
        for i in 0..50 {
            let s = bound.sample_slate(4, &mut rng).unwrap();
            let r: Vec<f64> = (0..4).map(|j| ((i + j) % 3) as f64).collect();
            total += r.iter().sum::<f64>();
            b.push_indexed(ci, &s.actions, &s.propensities, &r).unwrap();
        }
        let ds = b.build().unwrap();
        let v = pi_uniform(&ds, &UniformRandomPolicy, &PiConfig::default())
            .unwrap()
            .value;
        assert!((v - total / 50.0).abs() < 1e-6);
    }
}
