//! Command-line interface.
//!
//! Every subcommand resolves a [`RunConfig`] from defaults, an optional
//! `--config` JSON file and command-line flags (flags win), then writes the
//! resolved config as `config.json` next to its outputs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use slate_ope_core::estimators::PiConfig;
use slate_ope_core::simulator::DEFAULT_RHO;
use slate_ope_core::{
    CascadeMode, CascadeRecovery, Error, EstimatorKind, EstimatorSpec, PolicySpec, ScoreTable,
    SimWorld, TruthMethod,
};

use crate::error::{AppError, Result};
use crate::harness::{
    evaluate_all, CellSummary, Experiment, ExperimentResult, RmseSummary, SweepSettings,
    DEFAULT_TRUTH_SAMPLES,
};
use crate::io;

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), " (slate-ope)");

#[derive(Debug, Parser)]
#[command(name = "slate-ope", version = BUILD_ID, about = "Off-policy evaluation of slate recommendation policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a world and log impressions from it.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        /// Logging policy.
        #[arg(long)]
        logging: Option<String>,
        #[arg(long)]
        slate_size: Option<usize>,
        /// Number of impressions.
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Estimate a target policy's value from logged impressions.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Impressions in JSONL form.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Estimators, comma-separated or repeated.
        #[arg(long = "estimator", value_delimiter = ',')]
        estimators: Vec<String>,
        /// RIPS lookback threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        target: Option<String>,
        /// Logging policy, needed by `pi_mc`.
        #[arg(long)]
        logging: Option<String>,
        /// World file whose true rewards serve as policy scores.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Score table `{context: {candidate: score}}`.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        pi_mc_samples: Option<usize>,
    },
    /// Exact or Monte-Carlo value of a target policy on a world.
    Truth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        slate_size: Option<usize>,
        #[arg(long)]
        truth_mc_samples: Option<usize>,
    },
    /// Every logging policy against every target policy.
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// RIPS across lookback thresholds.
    SweepThreshold {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Estimators across slate sizes.
    SweepSlate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        slate_sizes: Vec<usize>,
    },
    /// Estimators across dataset sizes.
    SweepData {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Fractions of `n` evaluated.
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for repeats.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Load the world from a file instead of generating it.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    /// `hard` or `probabilistic`.
    #[arg(long)]
    pub cascade: Option<String>,
    /// Damping of the probabilistic cascade.
    #[arg(long)]
    pub rho: Option<f64>,
    /// `chain` or `one_step`.
    #[arg(long)]
    pub recovery: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Logging policies, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub logging: Vec<String>,
    /// Target policies, comma-separated or repeated.
    #[arg(long = "target", value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Estimators, comma-separated or repeated.
    #[arg(long = "estimator", value_delimiter = ',')]
    pub estimators: Vec<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Impressions per repeat.
    #[arg(short, long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub slate_size: Option<usize>,
    #[arg(long)]
    pub truth_mc_samples: Option<usize>,
    /// Also write long-format CSV for plotting.
    #[arg(long)]
    pub plot_data: bool,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub contexts: usize,
    pub candidates: usize,
    pub cascade: String,
    pub rho: f64,
    pub recovery: CascadeRecovery,
    pub logs: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub logging: Vec<String>,
    pub targets: Vec<String>,
    pub estimators: Vec<String>,
    pub threshold: f64,
    pub thresholds: Vec<f64>,
    pub slate_size: usize,
    pub slate_sizes: Vec<usize>,
    pub n: usize,
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub truth_mc_samples: usize,
    pub pi_mc_samples: usize,
    pub plot_data: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            jobs: 1,
            out: None,
            world: None,
            contexts: 50,
            candidates: 10,
            cascade: String::from("hard"),
            rho: DEFAULT_RHO,
            recovery: CascadeRecovery::Chain,
            logs: None,
            scores: None,
            logging: Vec::new(),
            targets: Vec::new(),
            estimators: Vec::new(),
            threshold: slate_ope_core::RipsConfig::DEFAULT_THRESHOLD,
            thresholds: vec![1.0, 0.1, 0.01, 0.001],
            slate_size: 10,
            slate_sizes: vec![1, 3, 5, 10],
            n: 10_000,
            fractions: vec![0.01, 0.1, 1.0],
            repeats: 20,
            truth_mc_samples: DEFAULT_TRUTH_SAMPLES,
            pi_mc_samples: PiConfig::default().mc_samples,
            plot_data: false,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_list<T>(slot: &mut Vec<T>, values: Vec<T>) {
    if !values.is_empty() {
        *slot = values;
    }
}

fn parse_recovery(s: &str) -> Result<CascadeRecovery> {
    match s {
        "chain" => Ok(CascadeRecovery::Chain),
        "one_step" | "one-step" => Ok(CascadeRecovery::OneStep),
        _ => Err(AppError::Input(format!("unknown cascade recovery {s:?}"))),
    }
}

impl CommonArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.seed, self.seed);
        set(&mut c.jobs, self.jobs);
        if self.out.is_some() {
            c.out = self.out.clone();
        }
    }
}

impl WorldArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<()> {
        if self.world.is_some() {
            c.world = self.world.clone();
        }
        set(&mut c.contexts, self.contexts);
        set(&mut c.candidates, self.candidates);
        set(&mut c.cascade, self.cascade.clone());
        set(&mut c.rho, self.rho);
        if let Some(r) = &self.recovery {
            c.recovery = parse_recovery(r)?;
        }
        Ok(())
    }
}

impl ExperimentArgs {
    fn apply(&self, c: &mut RunConfig) {
        set_list(&mut c.logging, self.logging.clone());
        set_list(&mut c.targets, self.targets.clone());
        set_list(&mut c.estimators, self.estimators.clone());
        set(&mut c.threshold, self.threshold);
        set(&mut c.n, self.n);
        set(&mut c.repeats, self.repeats);
        set(&mut c.slate_size, self.slate_size);
        set(&mut c.truth_mc_samples, self.truth_mc_samples);
        c.plot_data |= self.plot_data;
    }
}

fn fill_default(list: &mut Vec<String>, defaults: &[&str]) {
    if list.is_empty() {
        *list = defaults.iter().map(|s| s.to_string()).collect();
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Truth { .. } => "truth",
            Command::Grid { .. } => "grid",
            Command::SweepThreshold { .. } => "sweep-threshold",
            Command::SweepSlate { .. } => "sweep-slate",
            Command::SweepData { .. } => "sweep-data",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate { common, .. }
            | Command::Estimate { common, .. }
            | Command::Truth { common, .. }
            | Command::Grid { common, .. }
            | Command::SweepThreshold { common, .. }
            | Command::SweepSlate { common, .. }
            | Command::SweepData { common, .. } => common,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let common = self.common();
        let mut c = match &common.config {
            Some(path) => io::read_json::<RunConfig>(path)?,
            None => RunConfig::default(),
        };
        c.command = self.name().to_string();
        common.apply(&mut c);
        match self {
            Command::Simulate {
                world,
                logging,
                slate_size,
                n,
                ..
            } => {
                world.apply(&mut c)?;
                if let Some(l) = logging {
                    c.logging = vec![l.clone()];
                }
                set(&mut c.slate_size, *slate_size);
                set(&mut c.n, *n);
                fill_default(&mut c.logging, &["uniform"]);
            }
            Command::Estimate {
                logs,
                estimators,
                threshold,
                target,
                logging,
                world,
                scores,
                pi_mc_samples,
                ..
            } => {
                if logs.is_some() {
                    c.logs = logs.clone();
                }
                set_list(&mut c.estimators, estimators.clone());
                set(&mut c.threshold, *threshold);
                if let Some(t) = target {
                    c.targets = vec![t.clone()];
                }
                if let Some(l) = logging {
                    c.logging = vec![l.clone()];
                }
                if world.is_some() {
                    c.world = world.clone();
                }
                if scores.is_some() {
                    c.scores = scores.clone();
                }
                set(&mut c.pi_mc_samples, *pi_mc_samples);
                fill_default(&mut c.estimators, &["rips"]);
            }
            Command::Truth {
                world,
                target,
                slate_size,
                truth_mc_samples,
                ..
            } => {
                world.apply(&mut c)?;
                if let Some(t) = target {
                    c.targets = vec![t.clone()];
                }
                set(&mut c.slate_size, *slate_size);
                set(&mut c.truth_mc_samples, *truth_mc_samples);
            }
            Command::Grid { world, exp, .. } => {
                world.apply(&mut c)?;
                exp.apply(&mut c);
                let all = ["optimal", "anti-optimal", "uniform"];
                fill_default(&mut c.logging, &all);
                fill_default(&mut c.targets, &all);
                fill_default(&mut c.estimators, &["online", "ips", "nis", "iips", "rips"]);
            }
            Command::SweepThreshold {
                world,
                exp,
                thresholds,
                ..
            } => {
                world.apply(&mut c)?;
                exp.apply(&mut c);
                set_list(&mut c.thresholds, thresholds.clone());
                fill_default(&mut c.logging, &["uniform"]);
                fill_default(&mut c.targets, &["anti-optimal"]);
            }
            Command::SweepSlate {
                world,
                exp,
                slate_sizes,
                ..
            } => {
                world.apply(&mut c)?;
                exp.apply(&mut c);
                set_list(&mut c.slate_sizes, slate_sizes.clone());
                fill_default(&mut c.logging, &["uniform"]);
                fill_default(&mut c.targets, &["optimal"]);
                fill_default(
                    &mut c.estimators,
                    &["ips", "nis", "iips", "iips_sn", "rips"],
                );
            }
            Command::SweepData {
                world,
                exp,
                fractions,
                ..
            } => {
                world.apply(&mut c)?;
                exp.apply(&mut c);
                set_list(&mut c.fractions, fractions.clone());
                fill_default(&mut c.logging, &["uniform"]);
                fill_default(&mut c.targets, &["optimal", "anti-optimal"]);
                fill_default(&mut c.estimators, &["ips", "nis", "iips", "rips"]);
            }
        }
        Ok(c)
    }
}

impl RunConfig {
    fn cascade_mode(&self) -> Result<CascadeMode> {
        match self.cascade.as_str() {
            "hard" => Ok(CascadeMode::Hard),
            "probabilistic" => Ok(CascadeMode::Probabilistic { rho: self.rho }),
            s => Err(AppError::Input(format!("unknown cascade mode {s:?}"))),
        }
    }

    /// Loads the world file, or generates a world from the seed.
    pub fn world(&self) -> Result<SimWorld> {
        match &self.world {
            Some(path) => io::read_world(path),
            None => Ok(SimWorld::generate(
                self.contexts,
                self.candidates,
                self.cascade_mode()?,
                self.seed,
            )?
            .with_recovery(self.recovery)),
        }
    }

    fn policies(list: &[String]) -> Result<Vec<PolicySpec>> {
        list.iter().map(|s| Ok(s.parse::<PolicySpec>()?)).collect()
    }

    fn single_policy(list: &[String], what: &str) -> Result<PolicySpec> {
        match list {
            [one] => Ok(one.parse()?),
            _ => Err(AppError::Input(format!(
                "expected exactly one {what} policy"
            ))),
        }
    }

    pub fn estimator_specs(&self) -> Result<Vec<EstimatorSpec>> {
        self.estimators
            .iter()
            .map(|name| {
                let kind: EstimatorKind = name.parse()?;
                let mut spec = EstimatorSpec::new(kind);
                spec.threshold = self.threshold;
                spec.pi = PiConfig {
                    mc_samples: self.pi_mc_samples,
                    seed: self.seed,
                };
                if kind == EstimatorKind::Rips {
                    slate_ope_core::RipsConfig::new(self.threshold)?;
                }
                Ok(spec)
            })
            .collect()
    }

    fn settings(&self) -> SweepSettings {
        SweepSettings {
            slate_size: self.slate_size,
            n: self.n,
            repeats: self.repeats,
            seed: self.seed,
            truth_mc_samples: self.truth_mc_samples,
        }
    }

    fn out_dir(&self) -> Result<Option<PathBuf>> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
                Ok(Some(dir.clone()))
            }
            None => Ok(None),
        }
    }

    /// Output directory for commands that always write files.
    fn out_dir_or_cwd(&self) -> Result<PathBuf> {
        Ok(self.out_dir()?.unwrap_or_else(|| PathBuf::from(".")))
    }
}

/// Parses `args` and runs the command, writing reports to `stdout` and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return u8::try_from(code).unwrap_or(1);
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<()> {
    let config = command.resolve()?;
    match command {
        Command::Simulate { .. } => simulate(&config),
        Command::Estimate { .. } => estimate(&config, stdout),
        Command::Truth { .. } => truth(&config, stdout),
        Command::Grid { .. }
        | Command::SweepThreshold { .. }
        | Command::SweepSlate { .. }
        | Command::SweepData { .. } => experiment(&config),
    }
}

fn write_config(dir: &Path, config: &RunConfig) -> Result<()> {
    io::write_json(&dir.join("config.json"), config)
}

fn print_json<T: Serialize>(stdout: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Input(e.to_string()))?;
    writeln!(stdout, "{text}").map_err(|e| AppError::io("<stdout>", e))
}

fn simulate(config: &RunConfig) -> Result<()> {
    let world = config.world()?;
    let logging = RunConfig::single_policy(&config.logging, "logging")?;
    let policy = logging.build(Some(Arc::new(world.score_table())))?;
    let dataset = world.log_impressions(
        &policy,
        config.slate_size,
        config.n,
        slate_ope_core::seed::derive(config.seed, &[slate_ope_core::seed::stream::LOGS]),
    )?;
    let dir = config.out_dir_or_cwd()?;
    io::write_world(&dir.join("world.json"), &world)?;
    io::write_jsonl(&dir.join("logs.jsonl"), &dataset)?;
    write_config(&dir, config)
}

#[derive(Serialize)]
struct EstimateOutput {
    estimator: String,
    value: f64,
    per_position_value: Vec<f64>,
    chosen_lookbacks: Vec<usize>,
    ess_trace: Vec<Vec<slate_ope_core::estimators::LookbackStep>>,
    n_used: usize,
}

#[derive(Serialize)]
struct EstimateDocument {
    target: String,
    n: usize,
    slate_size: usize,
    estimates: Vec<EstimateOutput>,
}

fn score_source(config: &RunConfig) -> Result<Option<Arc<ScoreTable>>> {
    match (&config.scores, &config.world) {
        (Some(path), _) => Ok(Some(Arc::new(io::read_scores(path)?))),
        (None, Some(path)) => Ok(Some(Arc::new(io::read_world(path)?.score_table()))),
        (None, None) => Ok(None),
    }
}

fn estimate(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let logs = config
        .logs
        .as_ref()
        .ok_or_else(|| AppError::Input("estimate needs --logs".into()))?;
    let target_spec = RunConfig::single_policy(&config.targets, "target")?;
    let estimators = config.estimator_specs()?;
    let scores = score_source(config)?;
    let dataset = io::read_jsonl(logs)?;
    let target = target_spec.build(scores.clone())?;
    let logging = match config.logging.as_slice() {
        [] => None,
        [one] => Some(one.parse::<PolicySpec>()?.build(scores)?),
        _ => {
            return Err(AppError::Input(
                "expected at most one logging policy".into(),
            ))
        }
    };
    if logging.is_none() {
        if let Some(spec) = estimators.iter().find(|s| s.needs_logging_policy()) {
            return Err(AppError::Input(format!(
                "estimator {} needs --logging",
                spec.label()
            )));
        }
    }
    let reports: Vec<_> = match &logging {
        Some(l) => evaluate_all(&estimators, &dataset, &target, l),
        None => estimators
            .iter()
            .map(|s| s.evaluate(&dataset, &target, None))
            .collect(),
    };
    let mut outputs = Vec::with_capacity(reports.len());
    for (spec, report) in estimators.iter().zip(reports) {
        let r = report.map_err(|source| AppError::Estimator {
            name: spec.label(),
            source,
        })?;
        outputs.push(EstimateOutput {
            estimator: spec.label(),
            value: r.value,
            per_position_value: r.per_position_value,
            chosen_lookbacks: r.chosen_lookbacks,
            ess_trace: r.ess_trace,
            n_used: r.n_used,
        });
    }
    let doc = EstimateDocument {
        target: target_spec.to_string(),
        n: dataset.len(),
        slate_size: dataset.slate_size(),
        estimates: outputs,
    };
    if let Some(dir) = config.out_dir()? {
        io::write_json(&dir.join("estimate.json"), &doc)?;
        write_config(&dir, config)?;
    }
    print_json(stdout, &doc)
}

#[derive(Serialize)]
struct TruthDocument {
    target: String,
    slate_size: usize,
    value: f64,
    std_error: f64,
    method: TruthMethod,
    /// `exact` or `mc±<se>`.
    tag: String,
    samples: usize,
}

fn truth(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let world = config.world()?;
    let spec = RunConfig::single_policy(&config.targets, "target")?;
    let target = spec.build(Some(Arc::new(world.score_table())))?;
    let t = world.true_value(
        &target,
        config.slate_size,
        Some(config.truth_mc_samples),
        slate_ope_core::seed::derive(config.seed, &[slate_ope_core::seed::stream::TRUTH]),
    )?;
    let tag = match t.method {
        TruthMethod::MonteCarlo => format!("mc±{}", t.std_error),
        _ => String::from("exact"),
    };
    let doc = TruthDocument {
        target: spec.to_string(),
        slate_size: config.slate_size,
        value: t.value,
        std_error: t.std_error,
        method: t.method,
        tag,
        samples: t.samples,
    };
    if let Some(dir) = config.out_dir()? {
        io::write_json(&dir.join("truth.json"), &doc)?;
        write_config(&dir, config)?;
    }
    print_json(stdout, &doc)
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    world_cascade: String,
    cells: &'a [CellSummary],
    rmse: &'a [RmseSummary],
}

fn experiment(config: &RunConfig) -> Result<()> {
    let world = config.world()?;
    let logging = RunConfig::policies(&config.logging)?;
    let targets = RunConfig::policies(&config.targets)?;
    let settings = config.settings();
    let exp = match config.command.as_str() {
        "grid" => Experiment {
            logging,
            targets,
            estimators: config.estimator_specs()?,
            slate_sizes: vec![config.slate_size],
            n: config.n,
            fractions: vec![1.0],
            repeats: config.repeats,
            seed: config.seed,
            truth_mc_samples: config.truth_mc_samples,
        },
        "sweep-threshold" => {
            for &t in &config.thresholds {
                slate_ope_core::RipsConfig::new(t)?;
            }
            Experiment {
                logging,
                targets,
                ..Experiment::threshold_sweep(
                    PolicySpec::uniform(),
                    PolicySpec::uniform(),
                    &config.thresholds,
                    settings,
                )
            }
        }
        "sweep-slate" => Experiment {
            logging,
            targets,
            ..Experiment::slate_size_sweep(
                PolicySpec::uniform(),
                PolicySpec::uniform(),
                config.estimator_specs()?,
                &config.slate_sizes,
                settings,
            )
        },
        "sweep-data" => Experiment {
            logging,
            targets,
            ..Experiment::data_size_sweep(
                PolicySpec::uniform(),
                Vec::new(),
                config.estimator_specs()?,
                &config.fractions,
                settings,
            )
        },
        other => return Err(AppError::Input(format!("not an experiment: {other}"))),
    };
    let result = exp.run(&world, config.jobs)?;
    let dir = config.out_dir_or_cwd()?;
    io::write_csv(&dir.join("rows.csv"), &result.rows)?;
    io::write_json(
        &dir.join("summary.json"),
        &Summary {
            command: &config.command,
            world_cascade: world.cascade_label(),
            cells: &result.cells,
            rmse: &result.rmse,
        },
    )?;
    if config.plot_data {
        write_plot_data(&dir, &config.command, &result)?;
    }
    write_config(&dir, config)
}

#[derive(Serialize)]
struct GridPoint<'a> {
    logging: &'a str,
    target: &'a str,
    estimator: &'a str,
    value: Option<f64>,
    ci95: Option<f64>,
    truth: f64,
}

#[derive(Serialize)]
struct ThresholdPoint<'a> {
    threshold: Option<f64>,
    series: &'a str,
    value: Option<f64>,
    ci95: Option<f64>,
    mean_lookback: Option<f64>,
    truth: f64,
}

#[derive(Serialize)]
struct SlateSizePoint<'a> {
    slate_size: usize,
    estimator: &'a str,
    value: Option<f64>,
    ci95: Option<f64>,
    abs_error: Option<f64>,
    truth: f64,
}

#[derive(Serialize)]
struct DataSizePoint<'a> {
    n: usize,
    fraction: f64,
    estimator: &'a str,
    rmse_median: Option<f64>,
    rmse_min: Option<f64>,
    rmse_max: Option<f64>,
}

/// Long-format tables, one row per (x value, series).
fn write_plot_data(dir: &Path, command: &str, result: &ExperimentResult) -> Result<()> {
    let cells = &result.cells;
    match command {
        "grid" => io::write_csv(
            &dir.join("plot_grid.csv"),
            &cells
                .iter()
                .map(|c| GridPoint {
                    logging: &c.logging,
                    target: &c.target,
                    estimator: &c.estimator,
                    value: c.mean,
                    ci95: c.ci95,
                    truth: c.truth,
                })
                .collect::<Vec<_>>(),
        ),
        "sweep-threshold" => io::write_csv(
            &dir.join("plot_threshold.csv"),
            &cells
                .iter()
                .map(|c| ThresholdPoint {
                    threshold: c.threshold,
                    series: &c.estimator,
                    value: c.mean,
                    ci95: c.ci95,
                    mean_lookback: c.mean_lookback,
                    truth: c.truth,
                })
                .collect::<Vec<_>>(),
        ),
        "sweep-slate" => io::write_csv(
            &dir.join("plot_slate_size.csv"),
            &cells
                .iter()
                .map(|c| SlateSizePoint {
                    slate_size: c.slate_size,
                    estimator: &c.estimator,
                    value: c.mean,
                    ci95: c.ci95,
                    abs_error: c.abs_error,
                    truth: c.truth,
                })
                .collect::<Vec<_>>(),
        ),
        "sweep-data" => io::write_csv(
            &dir.join("plot_data_size.csv"),
            &result
                .rmse
                .iter()
                .map(|r| DataSizePoint {
                    n: r.n,
                    fraction: r.fraction,
                    estimator: &r.estimator,
                    rmse_median: r.rmse_median,
                    rmse_min: r.rmse_min,
                    rmse_max: r.rmse_max,
                })
                .collect::<Vec<_>>(),
        ),
        _ => Err(AppError::Core(Error::InvalidConfig(format!(
            "no plot data for {command}"
        )))),
    }
}
