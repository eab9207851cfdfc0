//! Counterfactual evaluation of sequential slate recommendations.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`data`]: logged impressions and the columnar [`Dataset`] container.
//! * [`policy`] / [`policies`]: sequential slate policies that expose the
//!   conditional propensity of every sub-action given the previous ones.
//! * [`weights`]: per-position importance weights, teacher-forced on the logged
//!   prefix, and the effective sample size.
//! * [`estimators`]: on-policy mean, IPS, NIS, IIPS, the pseudoinverse
//!   estimator, and reward interaction IPS (closed form and the ESS-gated
//!   lookback algorithm).
//! * [`simulator`]: synthetic worlds with a cascading reward model and an
//!   exact forward-recursion oracle for policy values.
//! * [`stats`]: the small amount of summary statistics the harness needs.
//!
//! IO, file formats, the experiment harness and the CLI live in the
//! `slate-ope` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod estimators;
pub mod policies;
pub mod policy;
pub mod seed;
pub mod simulator;
pub mod stats;
pub mod weights;

pub use data::{Context, Dataset, DatasetBuilder, ImpressionRef, LoggedImpression};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, EstimatorKind, EstimatorSpec, RipsConfig};
pub use policies::{PolicySpec, ScoreTable, SlatePolicy, SortDirection};
pub use policy::{BoundPolicy, Policy, SampledSlate};
pub use simulator::{CascadeMode, CascadeRecovery, SimWorld, TruthEstimate, TruthMethod};
pub use weights::{effective_sample_size, WeightMatrix};
