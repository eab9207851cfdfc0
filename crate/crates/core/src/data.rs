//! Logged slate interactions.
//!
//! A [`LoggedImpression`] is the owned, identifier-based record that appears in
//! log files. A [`Dataset`] stores many impressions column-wise with actions
//! resolved to candidate indices, which is what the estimators iterate over.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recorded propensities below this are rejected at load time.
pub const PROPENSITY_FLOOR: f64 = 1e-12;

/// One context `X`: an identifier plus the ordered candidate sub-actions
/// available in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub id: String,
    pub candidates: Vec<String>,
}

impl Context {
    pub fn new(id: impl Into<String>, candidates: Vec<String>) -> Self {
        Self {
            id: id.into(),
            candidates,
        }
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidate_index(&self, candidate: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == candidate)
    }
}

/// One logged slate: context, ordered sub-actions, the logging policy's
/// conditional propensity at each position, and the per-position rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedImpression {
    pub context_id: String,
    pub candidates: Vec<String>,
    pub actions: Vec<String>,
    pub logging_propensities: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl LoggedImpression {
    pub fn slate_size(&self) -> usize {
        self.actions.len()
    }
}

/// Borrowed view of one impression inside a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct ImpressionRef<'a> {
    pub context_index: usize,
    pub context: &'a Context,
    pub actions: &'a [usize],
    pub logging_propensities: &'a [f64],
    pub rewards: &'a [f64],
}

impl ImpressionRef<'_> {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn to_owned_impression(&self) -> LoggedImpression {
        LoggedImpression {
            context_id: self.context.id.clone(),
            candidates: self.context.candidates.clone(),
            actions: self
                .actions
                .iter()
                .map(|&a| self.context.candidates[a].clone())
                .collect(),
            logging_propensities: self.logging_propensities.to_vec(),
            rewards: self.rewards.to_vec(),
        }
    }
}

/// Nonempty collection of impressions sharing one slate size `K`.
///
/// Storage is column-major per field: impression `n` owns entries
/// `n*K .. (n+1)*K` of `actions`, `propensities` and `rewards`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    slate_size: usize,
    contexts: Vec<Context>,
    context_of: Vec<usize>,
    actions: Vec<usize>,
    propensities: Vec<f64>,
    rewards: Vec<f64>,
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    pub fn from_impressions<I>(impressions: I) -> Result<Self>
    where
        I: IntoIterator<Item = LoggedImpression>,
    {
        let mut builder = DatasetBuilder::default();
        for imp in impressions {
            builder.push(&imp)?;
        }
        builder.build()
    }

    pub fn len(&self) -> usize {
        self.context_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context_of.is_empty()
    }

    pub fn slate_size(&self) -> usize {
        self.slate_size
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn impression(&self, n: usize) -> ImpressionRef<'_> {
        let k = self.slate_size;
        let range = n * k..(n + 1) * k;
        let context_index = self.context_of[n];
        ImpressionRef {
            context_index,
            context: &self.contexts[context_index],
            actions: &self.actions[range.clone()],
            logging_propensities: &self.propensities[range.clone()],
            rewards: &self.rewards[range],
        }
    }

    pub fn impressions(&self) -> impl ExactSizeIterator<Item = ImpressionRef<'_>> + '_ {
        (0..self.len()).map(move |n| self.impression(n))
    }

    /// Reward at `(impression, position)`, positions 0-indexed.
    pub fn reward(&self, n: usize, position: usize) -> f64 {
        self.rewards[n * self.slate_size + position]
    }

    /// The first `len` impressions, in logged order.
    pub fn prefix(&self, len: usize) -> Result<Dataset> {
        if len == 0 {
            return Err(Error::EmptyDataset);
        }
        let len = len.min(self.len());
        let k = self.slate_size;
        Ok(Dataset {
            slate_size: k,
            contexts: self.contexts.clone(),
            context_of: self.context_of[..len].to_vec(),
            actions: self.actions[..len * k].to_vec(),
            propensities: self.propensities[..len * k].to_vec(),
            rewards: self.rewards[..len * k].to_vec(),
        })
    }
}

/// Incrementally validates and collects impressions.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    slate_size: Option<usize>,
    contexts: Vec<Context>,
    by_id: BTreeMap<String, Vec<usize>>,
    candidate_lookup: Vec<BTreeMap<String, usize>>,
    context_of: Vec<usize>,
    actions: Vec<usize>,
    propensities: Vec<f64>,
    rewards: Vec<f64>,
}

impl DatasetBuilder {
    pub fn with_slate_size(slate_size: usize) -> Result<Self> {
        if slate_size == 0 {
            return Err(Error::EmptySlate);
        }
        Ok(Self {
            slate_size: Some(slate_size),
            ..Self::default()
        })
    }

    pub fn len(&self) -> usize {
        self.context_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context_of.is_empty()
    }

    /// Register a context and return its index. Identical contexts are
    /// interned; the same id with a different candidate list is a distinct
    /// context.
    pub fn add_context(&mut self, context: &Context) -> Result<usize> {
        if let Some(existing) = self.by_id.get(&context.id) {
            if let Some(&idx) = existing
                .iter()
                .find(|&&idx| self.contexts[idx].candidates == context.candidates)
            {
                return Ok(idx);
            }
        }
        let mut lookup = BTreeMap::new();
        for (i, c) in context.candidates.iter().enumerate() {
            if lookup.insert(c.clone(), i).is_some() {
                return Err(Error::InvalidImpression {
                    index: self.len(),
                    reason: format!("duplicate candidate {c:?} in context {:?}", context.id),
                });
            }
        }
        let idx = self.contexts.len();
        self.contexts.push(context.clone());
        self.candidate_lookup.push(lookup);
        self.by_id.entry(context.id.clone()).or_default().push(idx);
        Ok(idx)
    }

    /// Add an identifier-based record.
    pub fn push(&mut self, impression: &LoggedImpression) -> Result<()> {
        let index = self.len();
        let context = Context::new(impression.context_id.clone(), impression.candidates.clone());
        let ctx = self.add_context(&context)?;
        let mut actions = Vec::with_capacity(impression.actions.len());
        for a in &impression.actions {
            match self.candidate_lookup[ctx].get(a) {
                Some(&i) => actions.push(i),
                None => {
                    return Err(Error::InvalidImpression {
                        index,
                        reason: format!("action {a:?} is not in the candidate set"),
                    })
                }
            }
        }
        self.push_indexed(
            ctx,
            &actions,
            &impression.logging_propensities,
            &impression.rewards,
        )
    }

    /// Add an impression whose actions are already candidate indices of a
    /// registered context.
    pub fn push_indexed(
        &mut self,
        context_index: usize,
        actions: &[usize],
        propensities: &[f64],
        rewards: &[f64],
    ) -> Result<()> {
        let index = self.len();
        let invalid = |reason: String| Error::InvalidImpression { index, reason };
        let context = self
            .contexts
            .get(context_index)
            .ok_or_else(|| invalid(format!("unknown context index {context_index}")))?;
        let k = actions.len();
        if k == 0 {
            return Err(invalid("slate has no actions".into()));
        }
        if propensities.len() != k || rewards.len() != k {
            return Err(invalid(format!(
                "{} actions but {} propensities and {} rewards",
                k,
                propensities.len(),
                rewards.len()
            )));
        }
        match self.slate_size {
            Some(expected) if expected != k => {
                return Err(Error::SlateSizeMismatch {
                    index,
                    expected,
                    found: k,
                })
            }
            _ => {}
        }
        let m = context.num_candidates();
        if k > m {
            return Err(invalid(format!("slate size {k} exceeds {m} candidates")));
        }
        for (pos, &a) in actions.iter().enumerate() {
            if a >= m {
                return Err(invalid(format!("action index {a} out of range")));
            }
            if actions[..pos].contains(&a) {
                return Err(invalid(format!(
                    "action {:?} repeated in slate",
                    context.candidates[a]
                )));
            }
        }
        for &p in propensities {
            if !(p.is_finite() && (PROPENSITY_FLOOR..=1.0).contains(&p)) {
                return Err(invalid(format!(
                    "logging propensity {p} outside [{PROPENSITY_FLOOR:e}, 1]"
                )));
            }
        }
        for &r in rewards {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(format!(
                    "reward {r} is not a finite nonnegative value"
                )));
            }
        }
        self.slate_size = Some(k);
        self.context_of.push(context_index);
        self.actions.extend_from_slice(actions);
        self.propensities.extend_from_slice(propensities);
        self.rewards.extend_from_slice(rewards);
        Ok(())
    }

    pub fn build(self) -> Result<Dataset> {
        let slate_size = match self.slate_size {
            Some(k) if !self.context_of.is_empty() => k,
            _ => return Err(Error::EmptyDataset),
        };
        Ok(Dataset {
            slate_size,
            contexts: self.contexts,
            context_of: self.context_of,
            actions: self.actions,
            propensities: self.propensities,
            rewards: self.rewards,
        })
    }
}
