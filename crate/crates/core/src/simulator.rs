//! Synthetic slate worlds with a cascading reward model.
//!
//! Each context has `M` candidates with a true stream probability `p_c`.
//! Rewards are binary. The first position is `Bernoulli(p_{A_1})`; after a
//! zero reward the next position's success probability is damped by
//! `1 − ρ` (hard mode is `ρ = 1`). The true value of a policy is computed
//! exactly by a forward recursion over positions.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{Context, Dataset, DatasetBuilder};
use crate::error::{Error, Result};
use crate::policies::ScoreTable;
use crate::policy::{deterministic_slate, BoundPolicy, Policy};
use crate::seed;

/// Largest candidate count for which stochastic targets are valued by
/// enumerating every slate.
pub const ENUMERATION_LIMIT: usize = 6;

/// Default damping of the probabilistic cascade.
pub const DEFAULT_RHO: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CascadeMode {
    /// A zero reward forces the next reward to zero.
    #[default]
    Hard,
    /// After a zero reward the next success probability is `p · (1 − ρ)`.
    Probabilistic { rho: f64 },
}

impl CascadeMode {
    /// Probability multiplier applied after a zero reward.
    pub fn damping(self) -> f64 {
        match self {
            CascadeMode::Hard => 0.0,
            CascadeMode::Probabilistic { rho } => 1.0 - rho,
        }
    }

    fn validate(self) -> Result<Self> {
        if let CascadeMode::Probabilistic { rho } = self {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidProbability(rho));
            }
        }
        Ok(self)
    }
}

/// How far a zero reward propagates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeRecovery {
    /// Damping applies after every zero, so in hard mode one failure zeroes
    /// the rest of the slate.
    #[default]
    Chain,
    /// Damping applies only after a zero that was itself drawn undamped; a
    /// damped position does not damp the one after it.
    OneStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimContext {
    pub context: Context,
    /// True stream probability per candidate, aligned with
    /// `context.candidates`.
    pub true_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    contexts: Vec<SimContext>,
    cascade: CascadeMode,
    recovery: CascadeRecovery,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMethod {
    /// Deterministic target: one slate per context, valued exactly.
    Exact,
    /// Every slate with positive probability enumerated and valued exactly.
    Enumerated,
    /// Slates sampled from the target and valued exactly.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub value: f64,
    /// Zero unless `method` is Monte-Carlo.
    pub std_error: f64,
    pub method: TruthMethod,
    pub samples: usize,
}

fn id_width(n: usize) -> usize {
    let mut width = 1;
    let mut v = n.saturating_sub(1);
    while v >= 10 {
        v /= 10;
        width += 1;
    }
    width.max(2)
}

impl SimWorld {
    /// Draws `n_contexts` contexts with `num_candidates` candidates each and
    /// true rewards i.i.d. `Uniform(0, 1)`.
    pub fn generate(
        n_contexts: usize,
        num_candidates: usize,
        cascade: CascadeMode,
        seed: u64,
    ) -> Result<Self> {
        if n_contexts == 0 || num_candidates == 0 {
            return Err(Error::EmptyWorld);
        }
        let mut rng = seed::rng(seed::derive(seed, &[seed::stream::WORLD]));
        let (cw, mw) = (id_width(n_contexts), id_width(num_candidates));
        let contexts = (0..n_contexts)
            .map(|i| {
                let candidates = (0..num_candidates).map(|j| format!("c{j:0mw$}")).collect();
                let true_rewards = (0..num_candidates).map(|_| rng.random::<f64>()).collect();
                SimContext {
                    context: Context::new(format!("x{i:0cw$}"), candidates),
                    true_rewards,
                }
            })
            .collect();
        Self::from_parts(contexts, cascade, CascadeRecovery::Chain, seed)
    }

    pub fn from_parts(
        contexts: Vec<SimContext>,
        cascade: CascadeMode,
        recovery: CascadeRecovery,
        seed: u64,
    ) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyWorld);
        }
        let mut ids = alloc::collections::BTreeSet::new();
        for c in &contexts {
            if c.context.candidates.is_empty() {
                return Err(Error::EmptyWorld);
            }
            if !ids.insert(c.context.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate context id {:?}",
                    c.context.id
                )));
            }
            if c.true_rewards.len() != c.context.candidates.len() {
                return Err(Error::InvalidConfig(format!(
                    "context {:?} has {} candidates but {} true rewards",
                    c.context.id,
                    c.context.candidates.len(),
                    c.true_rewards.len()
                )));
            }
            if let Some(&p) = c.true_rewards.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidProbability(p));
            }
        }
        Ok(Self {
            contexts,
            cascade: cascade.validate()?,
            recovery,
            seed,
        })
    }

    pub fn with_recovery(mut self, recovery: CascadeRecovery) -> Self {
        self.recovery = recovery;
        self
    }

    pub fn with_cascade(mut self, cascade: CascadeMode) -> Result<Self> {
        self.cascade = cascade.validate()?;
        Ok(self)
    }

    pub fn contexts(&self) -> &[SimContext] {
        &self.contexts
    }

    pub fn cascade(&self) -> CascadeMode {
        self.cascade
    }

    pub fn recovery(&self) -> CascadeRecovery {
        self.recovery
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Smallest candidate count over contexts.
    pub fn min_candidates(&self) -> usize {
        self.contexts
            .iter()
            .map(|c| c.context.num_candidates())
            .min()
            .unwrap_or(0)
    }

    /// True rewards as policy scores, so sorted policies rank by them.
    pub fn score_table(&self) -> ScoreTable {
        let mut table = ScoreTable::default();
        for c in &self.contexts {
            table.insert(
                c.context.id.clone(),
                c.context
                    .candidates
                    .iter()
                    .cloned()
                    .zip(c.true_rewards.iter().copied())
                    .collect(),
            );
        }
        table
    }

    fn check_actions(&self, context: usize, actions: &[usize]) -> Result<&SimContext> {
        let ctx = self
            .contexts
            .get(context)
            .ok_or_else(|| Error::InvalidConfig(format!("no context with index {context}")))?;
        let m = ctx.true_rewards.len();
        for (pos, &a) in actions.iter().enumerate() {
            if a >= m {
                return Err(Error::UnknownCandidate(format!("index {a}")));
            }
            if actions[..pos].contains(&a) {
                return Err(Error::InvalidConfig(format!(
                    "candidate {a} repeats in slate"
                )));
            }
        }
        Ok(ctx)
    }

    /// One session's rewards. Exactly one uniform draw is consumed per
    /// position, so `R_k` depends only on the first `k` actions for a given
    /// generator state.
    pub fn sample_rewards(
        &self,
        context: usize,
        actions: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        let ctx = self.check_actions(context, actions)?;
        let mut out = vec![0.0; actions.len()];
        self.fill_rewards(&ctx.true_rewards, actions, rng, &mut out);
        Ok(out)
    }

    fn fill_rewards(&self, p: &[f64], actions: &[usize], rng: &mut dyn RngCore, out: &mut [f64]) {
        let damping = self.cascade.damping();
        // Whether the next position is damped.
        let mut damped = false;
        for (slot, &a) in out.iter_mut().zip(actions) {
            let u: f64 = rng.random();
            let success_p = if damped { p[a] * damping } else { p[a] };
            let success = u < success_p;
            *slot = if success { 1.0 } else { 0.0 };
            damped = match self.recovery {
                CascadeRecovery::Chain => !success,
                CascadeRecovery::OneStep => !success && !damped,
            };
        }
    }

    /// Expected reward at each position of a fixed slate.
    pub fn expected_rewards(&self, context: usize, actions: &[usize]) -> Result<Vec<f64>> {
        let ctx = self.check_actions(context, actions)?;
        Ok(self.position_means(&ctx.true_rewards, actions))
    }

    fn position_means(&self, p: &[f64], actions: &[usize]) -> Vec<f64> {
        let damping = self.cascade.damping();
        let mut q = Vec::with_capacity(actions.len());
        match self.recovery {
            CascadeRecovery::Chain => {
                // P(R_{k-1} = 1), with an implicit success before position 1.
                let mut prev = 1.0;
                for &a in actions {
                    let qk = p[a] * (prev + damping * (1.0 - prev));
                    q.push(qk);
                    prev = qk;
                }
            }
            CascadeRecovery::OneStep => {
                // Probabilities of the previous position being a success, an
                // undamped zero, or a damped zero.
                let (mut succ, mut zero, mut damped_zero) = (1.0, 0.0, 0.0);
                for &a in actions {
                    let pa = p[a];
                    let free = succ + damped_zero;
                    let s = free * pa + zero * pa * damping;
                    let z = free * (1.0 - pa);
                    let d = zero * (1.0 - pa * damping);
                    q.push(s);
                    (succ, zero, damped_zero) = (s, z, d);
                }
            }
        }
        q
    }

    /// `E[Σ_k R_k]` for a fixed slate.
    pub fn slate_value(&self, context: usize, actions: &[usize]) -> Result<f64> {
        Ok(self.expected_rewards(context, actions)?.iter().sum())
    }

    /// Logs `n` impressions of `logging`: contexts uniformly at random, slates
    /// from the policy's sequential draws, rewards from the cascade.
    pub fn log_impressions(
        &self,
        logging: &dyn Policy,
        slate_size: usize,
        n: usize,
        seed: u64,
    ) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut builder = DatasetBuilder::with_slate_size(slate_size)?;
        let bound = self.bind_all(logging, slate_size)?;
        for c in &self.contexts {
            builder.add_context(&c.context)?;
        }
        let mut rng = seed::rng(seed);
        let mut rewards = vec![0.0; slate_size];
        for _ in 0..n {
            let ci = rng.random_range(0..self.contexts.len());
            let slate = bound[ci].sample_slate(slate_size, &mut rng)?;
            self.fill_rewards(
                &self.contexts[ci].true_rewards,
                &slate.actions,
                &mut rng,
                &mut rewards,
            );
            builder.push_indexed(ci, &slate.actions, &slate.propensities, &rewards)?;
        }
        builder.build()
    }

    fn bind_all<'a>(
        &'a self,
        policy: &'a dyn Policy,
        slate_size: usize,
    ) -> Result<Vec<Box<dyn BoundPolicy + 'a>>> {
        if slate_size == 0 {
            return Err(Error::EmptySlate);
        }
        self.contexts
            .iter()
            .map(|c| {
                let m = c.context.num_candidates();
                if slate_size > m {
                    return Err(Error::SlateTooLarge {
                        slate_size,
                        candidates: m,
                    });
                }
                policy.bind(&c.context)
            })
            .collect()
    }

    /// `V(h)` averaged uniformly over contexts.
    ///
    /// Deterministic targets and targets over at most `ENUMERATION_LIMIT`
    /// candidates are valued exactly. Otherwise `mc_samples` slates are
    /// drawn (spread evenly over contexts), each valued exactly, and the
    /// standard error is reported.
    pub fn true_value(
        &self,
        target: &dyn Policy,
        slate_size: usize,
        mc_samples: Option<usize>,
        seed: u64,
    ) -> Result<TruthEstimate> {
        let bound = self.bind_all(target, slate_size)?;
        let n_ctx = self.contexts.len() as f64;
        let mut method = TruthMethod::Exact;
        let mut total = 0.0;
        let mut variance = 0.0;
        let mut samples = 0;
        for (ci, (ctx, b)) in self.contexts.iter().zip(&bound).enumerate() {
            let p = &ctx.true_rewards;
            if let Some(slate) = deterministic_slate(&**b, slate_size) {
                total += self.position_means(p, &slate).iter().sum::<f64>();
            } else if b.num_candidates() <= ENUMERATION_LIMIT {
                if method == TruthMethod::Exact {
                    method = TruthMethod::Enumerated;
                }
                let mut chosen = Vec::with_capacity(slate_size);
                total += self.enumerate_value(&**b, p, slate_size, &mut chosen, 1.0);
            } else {
                let requested = mc_samples.unwrap_or(0);
                if requested == 0 {
                    return Err(Error::NotEnumerable {
                        candidates: b.num_candidates(),
                    });
                }
                method = TruthMethod::MonteCarlo;
                let per_context = requested.div_ceil(self.contexts.len()).max(2);
                let mut rng = seed::rng(seed::derive(seed, &[seed::stream::TRUTH, ci as u64]));
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..per_context {
                    let slate = b.sample_slate(slate_size, &mut rng)?;
                    let v: f64 = self.position_means(p, &slate.actions).iter().sum();
                    sum += v;
                    sum_sq += v * v;
                }
                let m = per_context as f64;
                let mean = sum / m;
                let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
                total += mean;
                variance += var / m;
                samples += per_context;
            }
        }
        Ok(TruthEstimate {
            value: total / n_ctx,
            std_error: libm::sqrt(variance) / n_ctx,
            method,
            samples,
        })
    }

    fn enumerate_value(
        &self,
        bound: &dyn BoundPolicy,
        p: &[f64],
        slate_size: usize,
        chosen: &mut Vec<usize>,
        prob: f64,
    ) -> f64 {
        if chosen.len() == slate_size {
            return prob * self.position_means(p, chosen).iter().sum::<f64>();
        }
        let mut dist = vec![0.0; bound.num_candidates()];
        bound.next_distribution(chosen, &mut dist);
        let mut acc = 0.0;
        for (c, &pc) in dist.iter().enumerate() {
            if pc > 0.0 {
                chosen.push(c);
                acc += self.enumerate_value(bound, p, slate_size, chosen, prob * pc);
                chosen.pop();
            }
        }
        acc
    }

    /// Context index by identifier.
    pub fn context_index(&self, id: &str) -> Option<usize> {
        self.contexts.iter().position(|c| c.context.id == id)
    }

    /// Human-readable cascade label, e.g. `hard` or `probabilistic(0.7)`.
    pub fn cascade_label(&self) -> String {
        match self.cascade {
            CascadeMode::Hard => String::from("hard"),
            CascadeMode::Probabilistic { rho } => format!("probabilistic({rho})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{PolicySpec, UniformRandomPolicy};
    use alloc::string::ToString;
    use alloc::sync::Arc;

    fn fixed_world(p: &[f64], cascade: CascadeMode) -> SimWorld {
        let candidates = (0..p.len()).map(|i| format!("c{i}")).collect();
        SimWorld::from_parts(
            vec![SimContext {
                context: Context::new("x", candidates),
                true_rewards: p.to_vec(),
            }],
            cascade,
            CascadeRecovery::Chain,
            0,
        )
        .unwrap()
    }

    fn empirical_mean(world: &SimWorld, actions: &[usize], n: usize, seed: u64) -> (f64, f64) {
        let mut rng = seed::rng(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v: f64 = world
                .sample_rewards(0, actions, &mut rng)
                .unwrap()
                .iter()
                .sum();
            s += v;
            s2 += v * v;
        }
        let m = s / n as f64;
        let var = (s2 / n as f64 - m * m) * n as f64 / (n as f64 - 1.0);
        (m, libm::sqrt(var / n as f64))
    }

    #[test]
    fn generation_is_deterministic() {
        let a = SimWorld::generate(1, 10, CascadeMode::Hard, 42).unwrap();
        let b = SimWorld::generate(1, 10, CascadeMode::Hard, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.contexts()[0].context.num_candidates(), 10);
        assert_ne!(a, SimWorld::generate(1, 10, CascadeMode::Hard, 43).unwrap());
        assert_eq!(
            SimWorld::generate(0, 10, CascadeMode::Hard, 1).unwrap_err(),
            Error::EmptyWorld
        );
        let w = SimWorld::generate(3, 12, CascadeMode::Hard, 1).unwrap();
        assert_eq!(w.contexts()[2].context.id, "x02");
        assert_eq!(w.contexts()[0].context.candidates[11], "c11");
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let ctx = SimContext {
            context: Context::new("x", vec!["a".to_string()]),
            true_rewards: vec![1.5],
        };
        assert_eq!(
            SimWorld::from_parts(vec![ctx], CascadeMode::Hard, CascadeRecovery::Chain, 0)
                .unwrap_err(),
            Error::InvalidProbability(1.5)
        );
        let w = fixed_world(&[0.5], CascadeMode::Hard);
        assert!(w
            .with_cascade(CascadeMode::Probabilistic { rho: 2.0 })
            .is_err());
    }

    #[test]
    fn hard_cascade_forces_zeros() {
        let w = fixed_world(&[0.0, 1.0, 1.0], CascadeMode::Hard);
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            assert_eq!(
                w.sample_rewards(0, &[0, 1, 2], &mut rng).unwrap(),
                vec![0.0; 3]
            );
        }
        let w = fixed_world(&[1.0; 4], CascadeMode::Hard);
        assert_eq!(
            w.sample_rewards(0, &[3, 1, 0, 2], &mut rng).unwrap(),
            vec![1.0; 4]
        );
    }

    #[test]
    fn one_step_recovery_releases_after_one_position() {
        let w = fixed_world(&[0.0, 1.0, 1.0], CascadeMode::Hard)
            .with_recovery(CascadeRecovery::OneStep);
        let mut rng = seed::rng(1);
        assert_eq!(
            w.sample_rewards(0, &[0, 1, 2], &mut rng).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        assert_eq!(
            w.expected_rewards(0, &[0, 1, 2]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn hand_computed_value() {
        let w = fixed_world(&[0.5, 0.5], CascadeMode::Hard);
        let v = w.slate_value(0, &[0, 1]).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        let (m, se) = empirical_mean(&w, &[0, 1], 1_000_000, 7);
        assert!((m - 0.75).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn recursion_matches_sampling_in_every_mode() {
        let p = [0.9, 0.3, 0.6, 0.8, 0.2];
        for cascade in [CascadeMode::Hard, CascadeMode::Probabilistic { rho: 0.7 }] {
            for recovery in [CascadeRecovery::Chain, CascadeRecovery::OneStep] {
                let w = fixed_world(&p, cascade).with_recovery(recovery);
                let slate = [1, 0, 4, 2, 3];
                let v = w.slate_value(0, &slate).unwrap();
                let (m, se) = empirical_mean(&w, &slate, 200_000, 11);
                assert!(
                    (m - v).abs() < 3.5 * se,
                    "{cascade:?} {recovery:?}: {m} vs {v}"
                );
            }
        }
    }

    #[test]
    fn no_interaction_is_additive() {
        let p = [0.2, 0.7, 0.4];
        let w = fixed_world(&p, CascadeMode::Probabilistic { rho: 0.0 });
        let v = w.slate_value(0, &[2, 0, 1]).unwrap();
        assert!((v - 1.3).abs() < 1e-12);
    }

    #[test]
    fn single_position_value_is_first_pick() {
        let w = SimWorld::generate(5, 6, CascadeMode::Hard, 3).unwrap();
        let table = Arc::new(w.score_table());
        let optimal = PolicySpec::optimal().build(Some(table)).unwrap();
        let t = w.true_value(&optimal, 1, None, 0).unwrap();
        let expected = w
            .contexts()
            .iter()
            .map(|c| c.true_rewards.iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / 5.0;
        assert!((t.value - expected).abs() < 1e-12);
        assert_eq!(t.method, TruthMethod::Exact);
    }

    #[test]
    fn later_actions_do_not_affect_earlier_rewards() {
        let w = fixed_world(
            &[0.3, 0.6, 0.9, 0.5],
            CascadeMode::Probabilistic { rho: 0.5 },
        );
        for s in 0..50 {
            let a = w
                .sample_rewards(0, &[1, 0, 2, 3], &mut seed::rng(s))
                .unwrap();
            let b = w
                .sample_rewards(0, &[1, 0, 3, 2], &mut seed::rng(s))
                .unwrap();
            assert_eq!(a[..2], b[..2]);
        }
    }

    #[test]
    fn stochastic_truth_needs_samples_beyond_enumeration() {
        let w = SimWorld::generate(2, 8, CascadeMode::Hard, 3).unwrap();
        assert_eq!(
            w.true_value(&UniformRandomPolicy, 3, None, 0).unwrap_err(),
            Error::NotEnumerable { candidates: 8 }
        );
        let t = w
            .true_value(&UniformRandomPolicy, 3, Some(20_000), 0)
            .unwrap();
        assert_eq!(t.method, TruthMethod::MonteCarlo);
        assert!(t.std_error > 0.0);
    }

    #[test]
    fn enumeration_matches_monte_carlo() {
        let w = SimWorld::generate(3, 5, CascadeMode::Probabilistic { rho: 0.7 }, 9).unwrap();
        let exact = w.true_value(&UniformRandomPolicy, 4, None, 0).unwrap();
        assert_eq!(exact.method, TruthMethod::Enumerated);
        let mut rng = seed::rng(5);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let ci = rng.random_range(0..3);
            let slate = UniformRandomPolicy
                .sample_slate(&w.contexts()[ci].context, 4, &mut rng)
                .unwrap();
            let v: f64 = w
                .sample_rewards(ci, &slate.actions, &mut rng)
                .unwrap()
                .iter()
                .sum();
            s += v;
            s2 += v * v;
        }
        let m = s / n as f64;
        let se = libm::sqrt((s2 / n as f64 - m * m) / n as f64);
        assert!((m - exact.value).abs() < 3.5 * se);
    }

    #[test]
    fn logging_is_deterministic_and_records_propensities() {
        let w = SimWorld::generate(4, 10, CascadeMode::Hard, 1).unwrap();
        let a = w.log_impressions(&UniformRandomPolicy, 10, 50, 9).unwrap();
        let b = w.log_impressions(&UniformRandomPolicy, 10, 50, 9).unwrap();
        assert_eq!(a, b);
        let expected: Vec<f64> = (0..10).map(|i| 1.0 / (10 - i) as f64).collect();
        assert_eq!(a.impression(0).logging_propensities, &expected[..]);
        assert_eq!(
            w.log_impressions(&UniformRandomPolicy, 10, 0, 9)
                .unwrap_err(),
            Error::EmptyDataset
        );
        assert!(matches!(
            w.log_impressions(&UniformRandomPolicy, 11, 5, 9),
            Err(Error::SlateTooLarge { .. })
        ));
    }
}
