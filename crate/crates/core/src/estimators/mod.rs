//! Off-policy value estimators for slates.
//!
//! Every estimator returns an [`EstimateReport`] with the value estimate of
//! `V(h) = E[Σ_k R_k]`, its per-position decomposition and lookback/ESS
//! diagnostics. Estimators that only need per-position weights have
//! `*_with_weights` forms in the submodules so a harness can compute the
//! [`WeightMatrix`] once per dataset and target.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::weights::{effective_sample_size, WeightMatrix};

pub mod basic;
pub mod pi;
pub mod rips;

pub use pi::{PiConfig, SlateIndicator};
pub use rips::RipsConfig;

/// One lookback proposal considered at a position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookbackStep {
    pub lookback: usize,
    pub ess: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub per_position_value: Vec<f64>,
    /// Per position, every `(lookback, ESS)` proposal that was evaluated.
    pub ess_trace: Vec<Vec<LookbackStep>>,
    /// Per position (0-indexed), how many earlier positions' weights were
    /// folded into the reweighting factor.
    pub chosen_lookbacks: Vec<usize>,
    pub n_used: usize,
}

impl EstimateReport {
    pub(crate) fn from_positions(
        per_position_value: Vec<f64>,
        ess_trace: Vec<Vec<LookbackStep>>,
        chosen_lookbacks: Vec<usize>,
        n_used: usize,
    ) -> Self {
        let value = per_position_value.iter().sum();
        Self {
            value,
            per_position_value,
            ess_trace,
            chosen_lookbacks,
            n_used,
        }
    }

    pub fn mean_lookback(&self) -> f64 {
        if self.chosen_lookbacks.is_empty() {
            return 0.0;
        }
        self.chosen_lookbacks.iter().sum::<usize>() as f64 / self.chosen_lookbacks.len() as f64
    }

    /// Smallest ESS among accepted proposals.
    pub fn min_accepted_ess(&self) -> f64 {
        self.ess_trace
            .iter()
            .flatten()
            .filter(|s| s.accepted)
            .map(|s| s.ess)
            .fold(f64::INFINITY, f64::min)
    }
}

/// ESS used in diagnostics, zero where weights carry no mass.
pub(crate) fn diagnostic_ess(weights: &[f64]) -> f64 {
    effective_sample_size(weights).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "online")]
    Online,
    #[serde(rename = "ips")]
    Ips,
    #[serde(rename = "nis")]
    Nis,
    #[serde(rename = "iips")]
    Iips,
    /// Per-position self-normalised IIPS (`N w_k / Σ w_k`).
    #[serde(rename = "iips_sn")]
    IipsNormalized,
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "pi_mc")]
    PiMc,
    #[serde(rename = "rips_closed")]
    RipsClosed,
    #[serde(rename = "rips")]
    Rips,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Online,
        EstimatorKind::Ips,
        EstimatorKind::Nis,
        EstimatorKind::Iips,
        EstimatorKind::IipsNormalized,
        EstimatorKind::Pi,
        EstimatorKind::PiMc,
        EstimatorKind::RipsClosed,
        EstimatorKind::Rips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Online => "online",
            EstimatorKind::Ips => "ips",
            EstimatorKind::Nis => "nis",
            EstimatorKind::Iips => "iips",
            EstimatorKind::IipsNormalized => "iips_sn",
            EstimatorKind::Pi => "pi",
            EstimatorKind::PiMc => "pi_mc",
            EstimatorKind::RipsClosed => "rips_closed",
            EstimatorKind::Rips => "rips",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown estimator {s:?}")))
    }
}

fn default_threshold() -> f64 {
    RipsConfig::DEFAULT_THRESHOLD
}

/// An estimator together with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// RIPS lookback threshold `t`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Monte-Carlo settings for the pseudoinverse estimators.
    #[serde(default)]
    pub pi: PiConfig,
    /// Display label; defaults to the estimator name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            threshold: default_threshold(),
            pi: PiConfig::default(),
            label: None,
        }
    }

    pub fn rips(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::new(EstimatorKind::Rips)
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| String::from(self.kind.name()))
    }

    pub fn needs_logging_policy(&self) -> bool {
        self.kind == EstimatorKind::PiMc
    }

    pub fn needs_weights(&self) -> bool {
        !matches!(
            self.kind,
            EstimatorKind::Online | EstimatorKind::Pi | EstimatorKind::PiMc
        )
    }

    pub fn evaluate(
        &self,
        dataset: &Dataset,
        target: &dyn Policy,
        logging: Option<&dyn Policy>,
    ) -> Result<EstimateReport> {
        if self.needs_weights() {
            let weights = WeightMatrix::compute(dataset, target)?;
            self.evaluate_with_weights(dataset, &weights, target, logging)
        } else {
            self.dispatch(dataset, None, target, logging)
        }
    }

    /// Like [`EstimatorSpec::evaluate`], reusing precomputed weights of
    /// `target` on `dataset`.
    pub fn evaluate_with_weights(
        &self,
        dataset: &Dataset,
        weights: &WeightMatrix,
        target: &dyn Policy,
        logging: Option<&dyn Policy>,
    ) -> Result<EstimateReport> {
        self.dispatch(dataset, Some(weights), target, logging)
    }

    fn dispatch(
        &self,
        dataset: &Dataset,
        weights: Option<&WeightMatrix>,
        target: &dyn Policy,
        logging: Option<&dyn Policy>,
    ) -> Result<EstimateReport> {
        let weights = || weights.ok_or_else(|| Error::InvalidConfig("missing weights".into()));
        match self.kind {
            EstimatorKind::Online => basic::on_policy_mean(dataset),
            EstimatorKind::Ips => basic::ips(dataset, weights()?),
            EstimatorKind::Nis => basic::nis(dataset, weights()?),
            EstimatorKind::Iips => basic::iips(dataset, weights()?),
            EstimatorKind::IipsNormalized => basic::iips_normalized(dataset, weights()?),
            EstimatorKind::RipsClosed => rips::rips_closed_form(dataset, weights()?),
            EstimatorKind::Rips => {
                rips::rips(dataset, weights()?, &RipsConfig::new(self.threshold)?)
            }
            EstimatorKind::Pi => pi::pi_uniform(dataset, target, &self.pi),
            EstimatorKind::PiMc => {
                let logging = logging
                    .ok_or_else(|| Error::InvalidConfig("pi_mc needs the logging policy".into()))?;
                pi::pi_mc(dataset, target, logging, &self.pi)
            }
        }
    }
}

/// Empirical mean slate reward of the logged data.
pub fn on_policy_mean(dataset: &Dataset) -> Result<EstimateReport> {
    basic::on_policy_mean(dataset)
}

pub fn ips(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    basic::ips(dataset, &WeightMatrix::compute(dataset, target)?)
}

pub fn nis(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    basic::nis(dataset, &WeightMatrix::compute(dataset, target)?)
}

pub fn iips(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    basic::iips(dataset, &WeightMatrix::compute(dataset, target)?)
}

pub fn iips_normalized(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    basic::iips_normalized(dataset, &WeightMatrix::compute(dataset, target)?)
}

pub fn rips_closed_form(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    rips::rips_closed_form(dataset, &WeightMatrix::compute(dataset, target)?)
}

pub fn rips(dataset: &Dataset, target: &dyn Policy, config: &RipsConfig) -> Result<EstimateReport> {
    rips::rips(dataset, &WeightMatrix::compute(dataset, target)?, config)
}

pub fn pi_uniform(dataset: &Dataset, target: &dyn Policy) -> Result<EstimateReport> {
    pi::pi_uniform(dataset, target, &PiConfig::default())
}

pub fn pi_mc(
    dataset: &Dataset,
    target: &dyn Policy,
    logging: &dyn Policy,
    config: &PiConfig,
) -> Result<EstimateReport> {
    pi::pi_mc(dataset, target, logging, config)
}

pub(crate) fn check_shape(dataset: &Dataset, weights: &WeightMatrix) -> Result<()> {
    if dataset.len() != weights.num_impressions() || dataset.slate_size() != weights.slate_size() {
        return Err(Error::InvalidConfig(alloc::format!(
            "weight matrix is {}x{} but dataset is {}x{}",
            weights.num_impressions(),
            weights.slate_size(),
            dataset.len(),
            dataset.slate_size()
        )));
    }
    Ok(())
}
