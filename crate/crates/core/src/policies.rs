//! Concrete slate policies: uniform random, score-sorted, and softmax.
//!
//! The optimal and anti-optimal simulation policies are [`ScoreSortedPolicy`]
//! instances reading the simulator's true reward table through an ordinary
//! [`ScoreTable`]; they have no other access to the simulator.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Context;
use crate::error::{Error, Result};
use crate::policy::{BoundPolicy, Policy};

/// Per-context candidate scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTable(pub BTreeMap<String, BTreeMap<String, f64>>);

impl ScoreTable {
    pub fn insert(&mut self, context_id: impl Into<String>, scores: BTreeMap<String, f64>) {
        self.0.insert(context_id.into(), scores);
    }

    /// Scores aligned with `context.candidates`.
    pub fn scores_for(&self, context: &Context) -> Result<Vec<f64>> {
        let table = self
            .0
            .get(&context.id)
            .ok_or_else(|| Error::MissingScores(context.id.clone()))?;
        context
            .candidates
            .iter()
            .map(|c| {
                table.get(c).copied().ok_or_else(|| {
                    Error::MissingScores(format!("{} (candidate {c:?})", context.id))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandomPolicy;

struct BoundUniform {
    m: usize,
}

impl BoundPolicy for BoundUniform {
    fn num_candidates(&self) -> usize {
        self.m
    }

    fn next_distribution(&self, chosen: &[usize], out: &mut [f64]) {
        let remaining = self.m - chosen.len();
        let p = if remaining == 0 {
            0.0
        } else {
            1.0 / remaining as f64
        };
        out.iter_mut().for_each(|o| *o = p);
        for &c in chosen {
            out[c] = 0.0;
        }
    }

    fn propensity(&self, chosen: &[usize], candidate: usize) -> f64 {
        if chosen.contains(&candidate) {
            0.0
        } else {
            1.0 / (self.m - chosen.len()) as f64
        }
    }
}

impl Policy for UniformRandomPolicy {
    fn bind<'a>(&'a self, context: &'a Context) -> Result<Box<dyn BoundPolicy + 'a>> {
        Ok(Box::new(BoundUniform {
            m: context.num_candidates(),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDirection {
    #[serde(alias = "asc")]
    Ascending,
    #[serde(alias = "desc")]
    Descending,
}

/// Deterministic policy emitting candidates in score order. Ties are broken
/// by candidate identifier, ascending, in both directions.
#[derive(Debug, Clone)]
pub struct ScoreSortedPolicy {
    scores: Arc<ScoreTable>,
    direction: SortDirection,
}

impl ScoreSortedPolicy {
    pub fn new(scores: Arc<ScoreTable>, direction: SortDirection) -> Self {
        Self { scores, direction }
    }

    /// Candidate indices in emission order for `context`.
    pub fn order(&self, context: &Context) -> Result<Vec<usize>> {
        let scores = self.scores.scores_for(context)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            let by_score = match self.direction {
                SortDirection::Descending => scores[b].total_cmp(&scores[a]),
                SortDirection::Ascending => scores[a].total_cmp(&scores[b]),
            };
            by_score.then_with(|| context.candidates[a].cmp(&context.candidates[b]))
        });
        Ok(order)
    }
}

struct BoundSorted {
    order: Vec<usize>,
}

impl BoundSorted {
    fn next(&self, chosen: &[usize]) -> Option<usize> {
        self.order.iter().copied().find(|c| !chosen.contains(c))
    }
}

impl BoundPolicy for BoundSorted {
    fn num_candidates(&self) -> usize {
        self.order.len()
    }

    fn next_distribution(&self, chosen: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if let Some(c) = self.next(chosen) {
            out[c] = 1.0;
        }
    }

    fn propensity(&self, chosen: &[usize], candidate: usize) -> f64 {
        if self.next(chosen) == Some(candidate) {
            1.0
        } else {
            0.0
        }
    }
}

impl Policy for ScoreSortedPolicy {
    fn bind<'a>(&'a self, context: &'a Context) -> Result<Box<dyn BoundPolicy + 'a>> {
        Ok(Box::new(BoundSorted {
            order: self.order(context)?,
        }))
    }
}

/// Samples each position from a softmax over the remaining candidates'
/// scores at temperature `temperature`. An infinite temperature is uniform.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    scores: Arc<ScoreTable>,
    temperature: f64,
}

impl SoftmaxPolicy {
    pub fn new(scores: Arc<ScoreTable>, temperature: f64) -> Result<Self> {
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::InvalidTemperature(temperature));
        }
        Ok(Self {
            scores,
            temperature,
        })
    }
}

struct BoundSoftmax {
    scores: Vec<f64>,
    temperature: f64,
}

impl BoundPolicy for BoundSoftmax {
    fn num_candidates(&self) -> usize {
        self.scores.len()
    }

    fn next_distribution(&self, chosen: &[usize], out: &mut [f64]) {
        let max = self
            .scores
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            *o = if chosen.contains(&i) {
                0.0
            } else {
                libm::exp((self.scores[i] - max) / self.temperature)
            };
            total += *o;
        }
        if total > 0.0 {
            out.iter_mut().for_each(|o| *o /= total);
        }
    }
}

impl Policy for SoftmaxPolicy {
    fn bind<'a>(&'a self, context: &'a Context) -> Result<Box<dyn BoundPolicy + 'a>> {
        Ok(Box::new(BoundSoftmax {
            scores: self.scores.scores_for(context)?,
            temperature: self.temperature,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Uniform,
    Sorted,
    Softmax,
}

/// Serializable policy configuration:
/// `{"kind": "uniform" | "sorted" | "softmax", "direction": "asc" | "desc", "temperature": float}`.
///
/// Also parses from the short forms `uniform`, `sorted:desc`, `sorted:asc`,
/// `optimal`, `anti-optimal` and `softmax:<temperature>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<SortDirection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl PolicySpec {
    pub const fn uniform() -> Self {
        Self {
            kind: PolicyKind::Uniform,
            direction: None,
            temperature: None,
        }
    }

    pub const fn sorted(direction: SortDirection) -> Self {
        Self {
            kind: PolicyKind::Sorted,
            direction: Some(direction),
            temperature: None,
        }
    }

    pub const fn optimal() -> Self {
        Self::sorted(SortDirection::Descending)
    }

    pub const fn anti_optimal() -> Self {
        Self::sorted(SortDirection::Ascending)
    }

    pub const fn softmax(temperature: f64) -> Self {
        Self {
            kind: PolicyKind::Softmax,
            direction: None,
            temperature: Some(temperature),
        }
    }

    pub fn needs_scores(&self) -> bool {
        self.kind != PolicyKind::Uniform
    }

    pub fn build(&self, scores: Option<Arc<ScoreTable>>) -> Result<SlatePolicy> {
        let need = || {
            scores
                .clone()
                .ok_or_else(|| Error::InvalidConfig(format!("policy {self} needs a score table")))
        };
        Ok(match self.kind {
            PolicyKind::Uniform => SlatePolicy::Uniform(UniformRandomPolicy),
            PolicyKind::Sorted => SlatePolicy::Sorted(ScoreSortedPolicy::new(
                need()?,
                self.direction.unwrap_or(SortDirection::Descending),
            )),
            PolicyKind::Softmax => SlatePolicy::Softmax(SoftmaxPolicy::new(
                need()?,
                self.temperature.unwrap_or(1.0),
            )?),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PolicyKind::Uniform => f.write_str("uniform"),
            PolicyKind::Sorted => match self.direction.unwrap_or(SortDirection::Descending) {
                SortDirection::Descending => f.write_str("sorted:desc"),
                SortDirection::Ascending => f.write_str("sorted:asc"),
            },
            PolicyKind::Softmax => write!(f, "softmax:{}", self.temperature.unwrap_or(1.0)),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let spec = match (head, arg) {
            ("uniform", None) | ("random", None) => Self::uniform(),
            ("optimal", None) | ("sorted", None) | ("sorted", Some("desc")) => Self::optimal(),
            ("anti-optimal", None) | ("anti_optimal", None) | ("sorted", Some("asc")) => {
                Self::anti_optimal()
            }
            ("softmax", None) => Self::softmax(1.0),
            ("softmax", Some(t)) => Self::softmax(
                t.parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad temperature {t:?}")))?,
            ),
            _ => return Err(Error::InvalidConfig(format!("unknown policy {s:?}"))),
        };
        Ok(spec)
    }
}

/// Any of the built-in policies.
#[derive(Debug, Clone)]
pub enum SlatePolicy {
    Uniform(UniformRandomPolicy),
    Sorted(ScoreSortedPolicy),
    Softmax(SoftmaxPolicy),
}

impl Policy for SlatePolicy {
    fn bind<'a>(&'a self, context: &'a Context) -> Result<Box<dyn BoundPolicy + 'a>> {
        match self {
            SlatePolicy::Uniform(p) => p.bind(context),
            SlatePolicy::Sorted(p) => p.bind(context),
            SlatePolicy::Softmax(p) => p.bind(context),
        }
    }
}

impl SlatePolicy {
    pub fn name(&self) -> String {
        match self {
            SlatePolicy::Uniform(_) => "uniform".to_string(),
            SlatePolicy::Sorted(p) => match p.direction {
                SortDirection::Descending => "sorted:desc".to_string(),
                SortDirection::Ascending => "sorted:asc".to_string(),
            },
            SlatePolicy::Softmax(p) => format!("softmax:{}", p.temperature),
        }
    }
}
