//! Repeated simulation experiments: the logging × target grid and sweeps
//! over the RIPS threshold, slate size and data size.
//!
//! Every experiment is an [`Experiment`]: for each slate size, logging
//! policy and repeat a fresh dataset is logged from the world; each dataset
//! prefix (data-size fraction) is scored by every estimator against every
//! target and compared with the oracle truth. Repeats run in parallel and
//! results are ordered independently of scheduling.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slate_ope_core::estimators::EstimateReport;
use slate_ope_core::{
    seed, stats, Dataset, Error, EstimatorKind, EstimatorSpec, PolicySpec, SimWorld, SlatePolicy,
    TruthEstimate, WeightMatrix,
};

use crate::error::{AppError, Result};

/// Default Monte-Carlo sample count for the truth of stochastic targets.
pub const DEFAULT_TRUTH_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub logging: Vec<PolicySpec>,
    pub targets: Vec<PolicySpec>,
    pub estimators: Vec<EstimatorSpec>,
    pub slate_sizes: Vec<usize>,
    /// Impressions logged per repeat.
    pub n: usize,
    /// Dataset prefixes evaluated, as fractions of `n`.
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub truth_mc_samples: usize,
}

/// The logging × target grid at one slate size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub logging: Vec<PolicySpec>,
    pub targets: Vec<PolicySpec>,
    pub estimators: Vec<EstimatorSpec>,
    pub slate_size: usize,
    pub n: usize,
    pub repeats: usize,
    pub seed: u64,
    pub truth_mc_samples: usize,
}

impl From<&ExperimentGrid> for Experiment {
    fn from(g: &ExperimentGrid) -> Self {
        Experiment {
            logging: g.logging.clone(),
            targets: g.targets.clone(),
            estimators: g.estimators.clone(),
            slate_sizes: vec![g.slate_size],
            n: g.n,
            fractions: vec![1.0],
            repeats: g.repeats,
            seed: g.seed,
            truth_mc_samples: g.truth_mc_samples,
        }
    }
}

/// Settings shared by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub slate_size: usize,
    pub n: usize,
    pub repeats: usize,
    pub seed: u64,
    pub truth_mc_samples: usize,
}

impl Experiment {
    /// RIPS at each threshold plus self-normalised IIPS as the `t = 1`
    /// reference, all on the same datasets.
    pub fn threshold_sweep(
        logging: PolicySpec,
        target: PolicySpec,
        thresholds: &[f64],
        settings: SweepSettings,
    ) -> Self {
        let mut estimators: Vec<EstimatorSpec> =
            thresholds.iter().map(|&t| EstimatorSpec::rips(t)).collect();
        estimators.push(EstimatorSpec::new(EstimatorKind::IipsNormalized));
        Self::single(logging, vec![target], estimators, settings)
    }

    pub fn slate_size_sweep(
        logging: PolicySpec,
        target: PolicySpec,
        estimators: Vec<EstimatorSpec>,
        slate_sizes: &[usize],
        settings: SweepSettings,
    ) -> Self {
        Self {
            slate_sizes: slate_sizes.to_vec(),
            ..Self::single(logging, vec![target], estimators, settings)
        }
    }

    pub fn data_size_sweep(
        logging: PolicySpec,
        targets: Vec<PolicySpec>,
        estimators: Vec<EstimatorSpec>,
        fractions: &[f64],
        settings: SweepSettings,
    ) -> Self {
        Self {
            fractions: fractions.to_vec(),
            ..Self::single(logging, targets, estimators, settings)
        }
    }

    fn single(
        logging: PolicySpec,
        targets: Vec<PolicySpec>,
        estimators: Vec<EstimatorSpec>,
        s: SweepSettings,
    ) -> Self {
        Self {
            logging: vec![logging],
            targets,
            estimators,
            slate_sizes: vec![s.slate_size],
            n: s.n,
            fractions: vec![1.0],
            repeats: s.repeats,
            seed: s.seed,
            truth_mc_samples: s.truth_mc_samples,
        }
    }

    pub fn validate(&self, world: &SimWorld) -> Result<()> {
        let invalid = |msg: String| Err(AppError::Input(msg));
        if self.logging.is_empty() || self.targets.is_empty() || self.estimators.is_empty() {
            return invalid("need at least one logging policy, target and estimator".into());
        }
        if self.repeats < 2 {
            return invalid(format!("repeats must be at least 2, got {}", self.repeats));
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset.into());
        }
        let m = world.min_candidates();
        for &k in &self.slate_sizes {
            if k == 0 {
                return Err(Error::EmptySlate.into());
            }
            if k > m {
                return Err(Error::SlateTooLarge {
                    slate_size: k,
                    candidates: m,
                }
                .into());
            }
        }
        if self.slate_sizes.is_empty() || self.fractions.is_empty() {
            return invalid("need at least one slate size and fraction".into());
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return invalid(format!("fractions must lie in (0, 1], got {f}"));
        }
        for e in &self.estimators {
            if e.kind == EstimatorKind::Rips {
                slate_ope_core::RipsConfig::new(e.threshold)?;
            }
        }
        Ok(())
    }

    /// Impressions in the prefix for `fraction`.
    pub fn prefix_len(&self, fraction: f64) -> usize {
        ((fraction * self.n as f64).round() as usize).clamp(1, self.n)
    }

    pub fn run(&self, world: &SimWorld, jobs: usize) -> Result<ExperimentResult> {
        self.validate(world)?;
        let scores = Arc::new(world.score_table());
        let build = |specs: &[PolicySpec]| -> Result<Vec<SlatePolicy>> {
            specs
                .iter()
                .map(|s| Ok(s.build(Some(Arc::clone(&scores)))?))
                .collect()
        };
        let logging = build(&self.logging)?;
        let targets = build(&self.targets)?;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| AppError::Input(format!("thread pool: {e}")))?;

        pool.install(|| {
            let truth_keys: Vec<(usize, usize)> = (0..self.slate_sizes.len())
                .flat_map(|ki| (0..targets.len()).map(move |ti| (ki, ti)))
                .collect();
            let truths: Vec<TruthEstimate> = truth_keys
                .par_iter()
                .map(|&(ki, ti)| {
                    let k = self.slate_sizes[ki];
                    world.true_value(
                        &targets[ti],
                        k,
                        Some(self.truth_mc_samples),
                        seed::derive(self.seed, &[seed::stream::TRUTH, ti as u64, k as u64]),
                    )
                })
                .collect::<std::result::Result<_, Error>>()?;
            let truth = |ki: usize, ti: usize| truths[ki * targets.len() + ti];

            let data_jobs: Vec<(usize, usize, usize)> = (0..self.slate_sizes.len())
                .flat_map(|ki| {
                    (0..logging.len())
                        .flat_map(move |li| (0..self.repeats).map(move |r| (ki, li, r)))
                })
                .collect();
            let rows: Vec<Vec<Row>> = data_jobs
                .par_iter()
                .map(|&(ki, li, r)| self.run_repeat(world, &logging, &targets, &truth, ki, li, r))
                .collect::<Result<_>>()?;
            let mut rows: Vec<Row> = rows.into_iter().flatten().collect();
            rows.sort_by_key(|row| row.key);
            Ok(ExperimentResult::from_rows(rows, self.repeats))
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_repeat(
        &self,
        world: &SimWorld,
        logging: &[SlatePolicy],
        targets: &[SlatePolicy],
        truth: &dyn Fn(usize, usize) -> TruthEstimate,
        ki: usize,
        li: usize,
        repeat: usize,
    ) -> Result<Vec<Row>> {
        let k = self.slate_sizes[ki];
        let log_seed = seed::derive(
            self.seed,
            &[seed::stream::LOGS, li as u64, k as u64, repeat as u64],
        );
        let full = world.log_impressions(&logging[li], k, self.n, log_seed)?;
        let mut rows = Vec::new();
        for (fi, &fraction) in self.fractions.iter().enumerate() {
            let len = self.prefix_len(fraction);
            let prefix;
            let dataset = if len == full.len() {
                &full
            } else {
                prefix = full.prefix(len)?;
                &prefix
            };
            for (ti, target) in targets.iter().enumerate() {
                let t = truth(ki, ti);
                let reports = evaluate_all(&self.estimators, dataset, target, &logging[li]);
                for (ei, (spec, report)) in self.estimators.iter().zip(reports).enumerate() {
                    rows.push(Row::new(
                        (ki, fi, li, ti, ei, repeat),
                        &self.logging[li],
                        &self.targets[ti],
                        spec,
                        k,
                        len,
                        fraction,
                        t,
                        report,
                    ));
                }
            }
        }
        Ok(rows)
    }
}

/// Runs every estimator on one dataset, computing the weight matrix once.
pub fn evaluate_all(
    estimators: &[EstimatorSpec],
    dataset: &Dataset,
    target: &SlatePolicy,
    logging: &SlatePolicy,
) -> Vec<std::result::Result<EstimateReport, Error>> {
    let weights = estimators
        .iter()
        .any(EstimatorSpec::needs_weights)
        .then(|| WeightMatrix::compute(dataset, target));
    estimators
        .iter()
        .map(|spec| match (&weights, spec.needs_weights()) {
            (Some(Ok(w)), true) => spec.evaluate_with_weights(dataset, w, target, Some(logging)),
            (Some(Err(e)), true) => Err(e.clone()),
            _ => spec.evaluate(dataset, target, Some(logging)),
        })
        .collect()
}

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Rounds a diagnostic to 4 decimals for compact output.
fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// One estimator on one repeat's dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub logging: String,
    pub target: String,
    pub estimator: String,
    /// RIPS lookback threshold; empty for other estimators.
    pub threshold: Option<f64>,
    pub slate_size: usize,
    pub n: usize,
    pub fraction: f64,
    pub repeat: usize,
    pub estimate: Option<f64>,
    pub truth: f64,
    pub abs_error: Option<f64>,
    pub mean_lookback: Option<f64>,
    /// Lookback chosen at each position, `;`-separated.
    pub chosen_lookbacks: String,
    /// ESS of the accepted proposal at each position, `;`-separated.
    pub accepted_ess: String,
    pub min_ess: Option<f64>,
    /// `ok` or the estimator's error message.
    pub status: String,
    #[serde(skip)]
    pub key: (usize, usize, usize, usize, usize, usize),
}

impl Row {
    #[allow(clippy::too_many_arguments)]
    fn new(
        key: (usize, usize, usize, usize, usize, usize),
        logging: &PolicySpec,
        target: &PolicySpec,
        spec: &EstimatorSpec,
        slate_size: usize,
        n: usize,
        fraction: f64,
        truth: TruthEstimate,
        report: std::result::Result<EstimateReport, Error>,
    ) -> Self {
        let mut row = Row {
            logging: logging.to_string(),
            target: target.to_string(),
            estimator: spec.label(),
            threshold: (spec.kind == EstimatorKind::Rips).then_some(spec.threshold),
            slate_size,
            n,
            fraction,
            repeat: key.5,
            estimate: None,
            truth: truth.value,
            abs_error: None,
            mean_lookback: None,
            chosen_lookbacks: String::new(),
            accepted_ess: String::new(),
            min_ess: None,
            status: String::from("ok"),
            key,
        };
        match report {
            Ok(r) => {
                row.estimate = Some(r.value);
                row.abs_error = Some((r.value - truth.value).abs());
                row.mean_lookback = Some(r.mean_lookback());
                row.chosen_lookbacks = join(&r.chosen_lookbacks);
                row.accepted_ess = join(r.ess_trace.iter().map(|steps| {
                    round4(
                        steps
                            .iter()
                            .rev()
                            .find(|s| s.accepted)
                            .map_or(0.0, |s| s.ess),
                    )
                }));
                let min = r.min_accepted_ess();
                row.min_ess = min.is_finite().then(|| round4(min));
            }
            Err(e) => row.status = e.to_string(),
        }
        row
    }
}

/// Aggregate of one (slate size, fraction, logging, target, estimator) cell
/// over repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub logging: String,
    pub target: String,
    pub estimator: String,
    pub threshold: Option<f64>,
    pub slate_size: usize,
    pub n: usize,
    pub fraction: f64,
    pub repeats_ok: usize,
    pub repeats_failed: usize,
    pub mean: Option<f64>,
    /// Half-width of the normal-approximation 95% interval over repeats.
    pub ci95: Option<f64>,
    pub truth: f64,
    pub abs_error: Option<f64>,
    pub mean_lookback: Option<f64>,
    pub first_error: Option<String>,
    #[serde(skip)]
    pub key: (usize, usize, usize, usize, usize),
}

impl CellSummary {
    pub fn is_diagonal(&self) -> bool {
        self.logging == self.target
    }

    /// Whether the truth lies within the cell's 95% interval.
    pub fn covers_truth(&self) -> bool {
        match (self.mean, self.ci95) {
            (Some(m), Some(ci)) => (m - self.truth).abs() <= ci,
            _ => false,
        }
    }
}

/// RMSE against the truth across targets, for one (slate size, fraction,
/// logging, estimator).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseSummary {
    pub logging: String,
    pub estimator: String,
    pub threshold: Option<f64>,
    pub slate_size: usize,
    pub n: usize,
    pub fraction: f64,
    /// RMSE of the per-target mean estimates.
    pub rmse_of_means: Option<f64>,
    /// Per-repeat RMSE across targets, summarised over repeats.
    pub rmse_median: Option<f64>,
    pub rmse_min: Option<f64>,
    pub rmse_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub cells: Vec<CellSummary>,
    pub rmse: Vec<RmseSummary>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl ExperimentResult {
    fn from_rows(rows: Vec<Row>, repeats: usize) -> Self {
        let mut groups: BTreeMap<(usize, usize, usize, usize, usize), Vec<&Row>> = BTreeMap::new();
        for row in &rows {
            let (ki, fi, li, ti, ei, _) = row.key;
            groups.entry((ki, fi, li, ti, ei)).or_default().push(row);
        }
        let cells: Vec<CellSummary> = groups
            .iter()
            .map(|(&key, group)| {
                let first = group[0];
                let ok: Vec<f64> = group.iter().filter_map(|r| r.estimate).collect();
                let lookbacks: Vec<f64> = group.iter().filter_map(|r| r.mean_lookback).collect();
                let mean = (!ok.is_empty()).then(|| stats::mean(&ok));
                CellSummary {
                    logging: first.logging.clone(),
                    target: first.target.clone(),
                    estimator: first.estimator.clone(),
                    threshold: first.threshold,
                    slate_size: first.slate_size,
                    n: first.n,
                    fraction: first.fraction,
                    repeats_ok: ok.len(),
                    repeats_failed: group.len() - ok.len(),
                    mean,
                    ci95: finite(stats::ci95_half_width(&ok)),
                    truth: first.truth,
                    abs_error: mean.map(|m| (m - first.truth).abs()),
                    mean_lookback: (!lookbacks.is_empty()).then(|| stats::mean(&lookbacks)),
                    first_error: group
                        .iter()
                        .find(|r| r.estimate.is_none())
                        .map(|r| r.status.clone()),
                    key,
                }
            })
            .collect();

        // (ki, fi, li, ei) -> per-target cells and per-repeat squared errors.
        let mut by_estimator: BTreeMap<(usize, usize, usize, usize), Vec<&CellSummary>> =
            BTreeMap::new();
        for c in &cells {
            let (ki, fi, li, _, ei) = c.key;
            by_estimator.entry((ki, fi, li, ei)).or_default().push(c);
        }
        let rmse = by_estimator
            .iter()
            .map(|(&(ki, fi, li, ei), group)| {
                let first = group[0];
                let means: Option<Vec<f64>> = group.iter().map(|c| c.mean).collect();
                let truths: Vec<f64> = group.iter().map(|c| c.truth).collect();
                let per_repeat: Option<Vec<f64>> = (0..repeats)
                    .map(|r| {
                        let estimates: Option<Vec<f64>> = group
                            .iter()
                            .map(|c| {
                                let (_, _, _, ti, _) = c.key;
                                groups[&(ki, fi, li, ti, ei)]
                                    .iter()
                                    .find(|row| row.repeat == r)
                                    .and_then(|row| row.estimate)
                            })
                            .collect();
                        estimates.map(|e| stats::rmse(&e, &truths))
                    })
                    .collect();
                RmseSummary {
                    logging: first.logging.clone(),
                    estimator: first.estimator.clone(),
                    threshold: first.threshold,
                    slate_size: first.slate_size,
                    n: first.n,
                    fraction: first.fraction,
                    rmse_of_means: means.map(|m| stats::rmse(&m, &truths)),
                    rmse_median: per_repeat.as_ref().map(|v| stats::median(v)),
                    rmse_min: per_repeat.as_ref().map(|v| stats::min(v)),
                    rmse_max: per_repeat.as_ref().map(|v| stats::max(v)),
                }
            })
            .collect();
        ExperimentResult { rows, cells, rmse }
    }

    /// The cell for the given names, first match.
    pub fn cell(&self, logging: &str, target: &str, estimator: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.logging == logging && c.target == target && c.estimator == estimator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use slate_ope_core::CascadeMode;

    fn settings(n: usize, repeats: usize) -> SweepSettings {
        SweepSettings {
            slate_size: 4,
            n,
            repeats,
            seed: 7,
            truth_mc_samples: 20_000,
        }
    }

    fn world() -> SimWorld {
        SimWorld::generate(5, 6, CascadeMode::Hard, 3).unwrap()
    }

    #[test]
    fn rmse_summary_matches_hand_computation() {
        let mk = |ti: usize, r: usize, est: f64, truth: f64| Row {
            logging: "uniform".into(),
            target: format!("t{ti}"),
            estimator: "ips".into(),
            threshold: None,
            slate_size: 1,
            n: 1,
            fraction: 1.0,
            repeat: r,
            estimate: Some(est),
            truth,
            abs_error: None,
            mean_lookback: None,
            chosen_lookbacks: String::new(),
            accepted_ess: String::new(),
            min_ess: None,
            status: "ok".into(),
            key: (0, 0, 0, ti, 0, r),
        };
        // target 0: truth 1, estimates 2 and 0 -> mean 1
        // target 1: truth 0, estimates 1 and 3 -> mean 2
        let rows = vec![
            mk(0, 0, 2.0, 1.0),
            mk(0, 1, 0.0, 1.0),
            mk(1, 0, 1.0, 0.0),
            mk(1, 1, 3.0, 0.0),
        ];
        let res = ExperimentResult::from_rows(rows, 2);
        let r = &res.rmse[0];
        assert!((r.rmse_of_means.unwrap() - (4.0f64 / 2.0).sqrt()).abs() < 1e-15);
        // repeat 0: errors 1, 1 -> 1; repeat 1: errors -1, 3 -> sqrt(5)
        assert!((r.rmse_min.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.rmse_max.unwrap() - 5.0f64.sqrt()).abs() < 1e-15);
        assert!((r.rmse_median.unwrap() - (1.0 + 5.0f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn runs_are_deterministic_across_job_counts() {
        let w = world();
        let exp = Experiment::threshold_sweep(
            PolicySpec::uniform(),
            PolicySpec::optimal(),
            &[1.0, 0.1],
            settings(300, 3),
        );
        let a = exp.run(&w, 1).unwrap();
        let b = exp.run(&w, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3 * 3);
    }

    #[test]
    fn diagonal_cells_agree_with_on_policy_mean() {
        let w = world();
        let grid = ExperimentGrid {
            logging: vec![PolicySpec::uniform()],
            targets: vec![PolicySpec::uniform()],
            estimators: ["online", "ips", "nis", "iips", "rips"]
                .iter()
                .map(|s| EstimatorSpec::new(s.parse().unwrap()))
                .collect(),
            slate_size: 3,
            n: 500,
            repeats: 5,
            seed: 1,
            truth_mc_samples: 1000,
        };
        let res = Experiment::from(&grid).run(&w, 1).unwrap();
        let online = res
            .cell("uniform", "uniform", "online")
            .unwrap()
            .mean
            .unwrap();
        for c in &res.cells {
            assert!((c.mean.unwrap() - online).abs() < 1e-9, "{}", c.estimator);
        }
    }

    #[test]
    fn overlap_failures_are_recorded_per_cell() {
        let w = world();
        let grid = ExperimentGrid {
            logging: vec![PolicySpec::optimal()],
            targets: vec![PolicySpec::anti_optimal()],
            estimators: vec![
                EstimatorSpec::new(EstimatorKind::Nis),
                EstimatorSpec::rips(0.01),
            ],
            slate_size: 3,
            n: 50,
            repeats: 2,
            seed: 1,
            truth_mc_samples: 1000,
        };
        let res = Experiment::from(&grid).run(&w, 1).unwrap();
        assert!(res
            .cells
            .iter()
            .all(|c| c.repeats_failed == 2 && c.mean.is_none()));
        assert!(res.rows.iter().all(|r| r.status != "ok"));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let w = world();
        let mut exp = Experiment::threshold_sweep(
            PolicySpec::uniform(),
            PolicySpec::optimal(),
            &[1.0],
            settings(10, 1),
        );
        assert!(exp.run(&w, 1).is_err());
        exp.repeats = 2;
        exp.slate_sizes = vec![7];
        assert!(exp.run(&w, 1).is_err());
        exp.slate_sizes = vec![2];
        exp.fractions = vec![0.0];
        assert!(exp.run(&w, 1).is_err());
    }

    #[test]
    fn data_size_prefixes_share_one_dataset() {
        let w = world();
        let exp = Experiment::data_size_sweep(
            PolicySpec::uniform(),
            vec![PolicySpec::optimal(), PolicySpec::anti_optimal()],
            vec![EstimatorSpec::new(EstimatorKind::Iips)],
            &[0.1, 1.0],
            settings(200, 2),
        );
        let res = exp.run(&w, 1).unwrap();
        assert_eq!(res.rmse.len(), 2);
        assert_eq!(res.rmse[0].n, 20);
        assert_eq!(res.rmse[1].n, 200);
    }
}
