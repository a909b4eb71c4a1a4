//! Convergence experiments: seeded trials, batches of trials, hidden-size
//! sweeps, and their CSV/JSON records.
//!
//! A logic-task trial counts as converged once every training pattern has
//! been answered correctly (sign agreement, measured on the pre-update
//! output during the online pass) for `convergence_window` consecutive
//! epochs. For spirals the same window is applied to checks taken every
//! `sample_every` epochs, each check requiring 100% training accuracy.

mod data;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{make_parity, make_spirals, make_xor, Dataset, SpiralParams, MAX_PARITY_BITS, SPIRAL_MARGIN};

use crate::network::{LayerSpec, Network, NetworkSpec};
use crate::numerics::RngState;
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 10;

/// Smallest QuasiNet hidden layer reaching full convergence on n-parity.
pub fn quasinet_table_hidden(n: usize) -> Option<usize> {
    match n {
        2 => Some(2),
        3 => Some(4),
        4 => Some(6),
        5 => Some(7),
        6 => Some(12),
        7 => Some(15),
        _ => None,
    }
}

/// Hidden sizes reported for the tanh-tanh MLP baseline on n-parity.
pub fn baseline_table_hidden(n: usize) -> Option<usize> {
    match n {
        2 => Some(4),
        3 => Some(9),
        4 => Some(12),
        5 => Some(50),
        6 | 7 => Some(45),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Task {
    Xor,
    Parity { n: usize },
    Spirals(SpiralParams),
}

impl Task {
    pub fn label(&self) -> String {
        match self {
            Task::Xor => "xor".into(),
            Task::Parity { n } => format!("parity{n}"),
            Task::Spirals(_) => "spirals".into(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Task::Xor => 2,
            Task::Parity { n } => *n,
            Task::Spirals(_) => 2,
        }
    }

    /// Epoch cap used for this task unless overridden.
    pub fn default_max_epochs(&self) -> usize {
        match self {
            Task::Xor => 500,
            Task::Parity { n } if *n == 8 => 5000,
            Task::Parity { .. } => 10_000,
            Task::Spirals(_) => 10_000,
        }
    }

    /// `(train, test)`; only spirals have a test set.
    pub fn datasets(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self {
            Task::Xor => Ok((make_xor(), None)),
            Task::Parity { n } => Ok((make_parity(*n)?, None)),
            Task::Spirals(p) => {
                let (train, test) = make_spirals(p, &mut RngState::new(p.seed).split(1))?;
                Ok((train, Some(test)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub spec: NetworkSpec,
    pub alpha: f64,
    pub max_epochs: usize,
    pub convergence_window: usize,
    pub runs: usize,
    pub base_seed: u64,
    /// Epochs between accuracy checks on tasks with a test set.
    pub sample_every: usize,
    /// Worker threads for batches; 0 lets the pool decide.
    pub jobs: usize,
}

impl TrainConfig {
    fn with_task(task: Task, spec: NetworkSpec, alpha: f64) -> Self {
        Self {
            task,
            spec,
            alpha,
            max_epochs: task.default_max_epochs(),
            convergence_window: DEFAULT_WINDOW,
            runs: 100,
            base_seed: 0,
            sample_every: 10,
            jobs: 0,
        }
    }

    /// Minimal XOR: `tanh:2,prod:1`, α = 0.9, N(0, 1), 500 epochs, 100 runs.
    pub fn xor() -> Self {
        let spec = NetworkSpec::new(2, vec![LayerSpec::tanh(2), LayerSpec::product(1)], 1.0);
        Self::with_task(Task::Xor, spec, 0.9)
    }

    /// QuasiNet `tanh:hidden,prod:1` on n-parity, α = 0.9, N(0, 1).
    pub fn parity(n: usize, hidden: usize) -> Self {
        let spec = NetworkSpec::new(n, vec![LayerSpec::tanh(hidden), LayerSpec::product(1)], 1.0);
        Self::with_task(Task::Parity { n }, spec, 0.9)
    }

    /// Tanh-tanh MLP `tanh:hidden,tanh:1` on n-parity with the same settings.
    pub fn parity_baseline(n: usize, hidden: usize) -> Self {
        let spec = NetworkSpec::mlp_baseline(n, hidden, 1, 1.0);
        Self::with_task(Task::Parity { n }, spec, 0.9)
    }

    /// `tanh:10,prod:80,tanh:5,prod:1`, α = 0.01, N(0, 0.5), 10k epochs, 10 runs.
    pub fn spirals(params: SpiralParams) -> Self {
        let spec = NetworkSpec::new(
            2,
            vec![
                LayerSpec::tanh(10),
                LayerSpec::product(80),
                LayerSpec::tanh(5),
                LayerSpec::product(1),
            ],
            0.5,
        );
        let mut config = Self::with_task(Task::Spirals(params), spec, 0.01);
        config.runs = 10;
        config
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig("convergence window must be >= 1".into()));
        }
        if self.max_epochs < self.convergence_window {
            return Err(Error::InvalidConfig(format!(
                "max_epochs ({}) must be >= convergence window ({})",
                self.max_epochs, self.convergence_window
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidConfig("sample_every must be >= 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {}", self.alpha)));
        }
        if self.spec.input_dim != self.task.input_dim() {
            return Err(Error::InvalidConfig(format!(
                "{} needs {} inputs, network has {}",
                self.task.label(),
                self.task.input_dim(),
                self.spec.input_dim
            )));
        }
        if self.spec.output_dim() != 1 {
            return Err(Error::InvalidConfig(format!(
                "built-in tasks have one output, architecture ends in {}",
                self.spec.output_dim()
            )));
        }
        match self.task {
            Task::Parity { n } if !(1..=MAX_PARITY_BITS).contains(&n) => Err(Error::InvalidConfig(format!(
                "parity order must be in 1..={MAX_PARITY_BITS}, got {n}"
            ))),
            Task::Spirals(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// Accuracy snapshot taken during a spirals run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub task: String,
    pub arch: String,
    pub alpha: f64,
    pub init_std: f64,
    pub converged: bool,
    /// Epoch at which the convergence window was completed.
    pub epochs_to_converge: Option<usize>,
    pub epochs_run: usize,
    pub final_train_acc: f64,
    pub test_acc: Option<f64>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectoryPoint>,
}

/// First epoch (1-indexed) closing a run of `window` consecutive `true`
/// flags, or `(false, None)`.
pub fn convergence_check(flags: &[bool], window: usize) -> (bool, Option<usize>) {
    let window = window.max(1);
    let mut streak = 0;
    for (i, &ok) in flags.iter().enumerate() {
        streak = if ok { streak + 1 } else { 0 };
        if streak >= window {
            return (true, Some(i + 1));
        }
    }
    (false, None)
}

/// Runs one trial, generating the task's data first.
pub fn run_trial(config: &TrainConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let (train, test) = config.task.datasets()?;
    run_trial_on(config, seed, &train, test.as_ref())
}

/// Runs one trial on pre-built data. Weight init draws from stream 1 of
/// `seed`, pattern shuffling from stream 2.
pub fn run_trial_on(config: &TrainConfig, seed: u64, train: &Dataset, test: Option<&Dataset>) -> Result<RunRecord> {
    let started = Instant::now();
    let root = RngState::new(seed);
    let mut net = Network::init(&config.spec, &mut root.split(1))?;
    let mut order_rng = root.split(2);

    let window = config.convergence_window;
    let mut streak = 0usize;
    let mut converged_at = None;
    let mut epochs_run = 0;
    let mut trajectory = Vec::new();

    for epoch in 1..=config.max_epochs {
        let stats = net.train_epoch(train, config.alpha, &mut order_rng)?;
        epochs_run = epoch;
        let check = match test {
            None => Some(stats.all_correct),
            Some(test) if epoch % config.sample_every == 0 => {
                let train_acc = net.accuracy(train)?;
                trajectory.push(TrajectoryPoint {
                    epoch,
                    train_acc,
                    test_acc: net.accuracy(test)?,
                });
                Some(train_acc == 1.0)
            }
            Some(_) => None,
        };
        if let Some(ok) = check {
            streak = if ok { streak + 1 } else { 0 };
            if streak >= window {
                converged_at = Some(epoch);
                break;
            }
        }
    }

    Ok(RunRecord {
        seed,
        task: config.task.label(),
        arch: config.spec.arch_string(),
        alpha: config.alpha,
        init_std: config.spec.init_std,
        converged: converged_at.is_some(),
        epochs_to_converge: converged_at,
        epochs_run,
        final_train_acc: net.accuracy(train)?,
        test_acc: test.map(|t| net.accuracy(t)).transpose()?,
        wall_time_s: started.elapsed().as_secs_f64(),
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub converged: usize,
    pub max_epochs: usize,
    /// Non-converged runs count as `max_epochs`.
    pub mean_epochs: f64,
    pub std_epochs: f64,
    /// Median over all runs, non-converged runs counted as `max_epochs`.
    pub median_epochs: f64,
    pub mean_final_train_acc: f64,
    pub mean_test_acc: Option<f64>,
    pub std_test_acc: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl BatchSummary {
    pub fn from_records(records: &[RunRecord], max_epochs: usize) -> Self {
        if records.is_empty() {
            return Self {
                runs: 0,
                converged: 0,
                max_epochs,
                mean_epochs: 0.0,
                std_epochs: 0.0,
                median_epochs: 0.0,
                mean_final_train_acc: 0.0,
                mean_test_acc: None,
                std_test_acc: None,
            };
        }
        let mut epochs: Vec<f64> = records
            .iter()
            .map(|r| r.epochs_to_converge.unwrap_or(max_epochs) as f64)
            .collect();
        let (mean_epochs, std_epochs) = mean_std(&epochs);
        epochs.sort_by(f64::total_cmp);
        let mid = epochs.len() / 2;
        let median_epochs = if epochs.len() % 2 == 1 {
            epochs[mid]
        } else {
            (epochs[mid - 1] + epochs[mid]) / 2.0
        };
        let train: Vec<f64> = records.iter().map(|r| r.final_train_acc).collect();
        let tests: Vec<f64> = records.iter().filter_map(|r| r.test_acc).collect();
        let (mean_test_acc, std_test_acc) = if tests.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&tests);
            (Some(m), Some(s))
        };
        Self {
            runs: records.len(),
            converged: records.iter().filter(|r| r.converged).count(),
            max_epochs,
            mean_epochs,
            std_epochs,
            median_epochs,
            mean_final_train_acc: mean_std(&train).0,
            mean_test_acc,
            std_test_acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchResult {
    pub config: TrainConfig,
    pub summary: BatchSummary,
    pub records: Vec<RunRecord>,
}

impl BatchResult {
    /// Config echo plus aggregate statistics; per-run trajectories are
    /// included for tasks that record them.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Trajectory<'a> {
            seed: u64,
            points: &'a [TrajectoryPoint],
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a TrainConfig,
            arch: String,
            summary: &'a BatchSummary,
            #[serde(skip_serializing_if = "Vec::is_empty")]
            trajectories: Vec<Trajectory<'a>>,
        }
        let trajectories = self
            .records
            .iter()
            .filter(|r| !r.trajectory.is_empty())
            .map(|r| Trajectory {
                seed: r.seed,
                points: &r.trajectory,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&Doc {
            config: &self.config,
            arch: self.config.spec.arch_string(),
            summary: &self.summary,
            trajectories,
        })?)
    }
}

/// Runs seeds `base_seed .. base_seed + runs` and summarizes them.
pub fn run_batch(config: &TrainConfig) -> Result<BatchResult> {
    run_batch_with(config, |_| {})
}

/// [`run_batch`] with a callback invoked as each trial finishes (in
/// completion order). Records are returned in seed order regardless.
pub fn run_batch_with<F>(config: &TrainConfig, on_done: F) -> Result<BatchResult>
where
    F: Fn(&RunRecord) + Sync,
{
    config.validate()?;
    let (train, test) = config.task.datasets()?;
    let seeds: Vec<u64> = (0..config.runs as u64).map(|i| config.base_seed + i).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let record = run_trial_on(config, seed, &train, test.as_ref())?;
                on_done(&record);
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BatchResult {
        summary: BatchSummary::from_records(&records, config.max_epochs),
        config: config.clone(),
        records,
    })
}

/// The spirals pipeline: [`run_batch`] on a spirals config.
pub fn run_spirals(config: &TrainConfig) -> Result<BatchResult> {
    if !matches!(config.task, Task::Spirals(_)) {
        return Err(Error::InvalidConfig("run_spirals needs a spirals task".into()));
    }
    run_batch(config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub hidden: usize,
    pub summary: BatchSummary,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

/// Hidden sizes `max(1, n − 2) ..= 2n + 4`.
pub fn default_sweep_sizes(n: usize) -> Vec<usize> {
    (n.saturating_sub(2).max(1)..=2 * n + 4).collect()
}

/// Re-runs `base` with a two-layer `hidden → 1` network for each size; the
/// second layer is a product neuron, or tanh when `baseline` is set.
pub fn sweep_hidden<F>(base: &TrainConfig, sizes: &[usize], baseline: bool, mut on_point: F) -> Result<Vec<SweepPoint>>
where
    F: FnMut(&SweepPoint),
{
    let mut points = Vec::with_capacity(sizes.len());
    for &hidden in sizes {
        let mut config = base.clone();
        let output = if baseline { LayerSpec::tanh(1) } else { LayerSpec::product(1) };
        config.spec.layers = vec![LayerSpec::tanh(hidden), output];
        let result = run_batch(&config)?;
        let point = SweepPoint {
            hidden,
            summary: result.summary,
            records: result.records,
        };
        on_point(&point);
        points.push(point);
    }
    Ok(points)
}

/// Size with the most converged runs; ties go to the smaller size.
pub fn best_hidden_size(points: &[SweepPoint]) -> Option<usize> {
    points
        .iter()
        .max_by(|a, b| {
            a.summary
                .converged
                .cmp(&b.summary.converged)
                .then(b.hidden.cmp(&a.hidden))
        })
        .map(|p| p.hidden)
}

pub const CSV_HEADER: [&str; 10] = [
    "seed",
    "task",
    "arch",
    "alpha",
    "init_std",
    "converged",
    "epochs",
    "final_train_acc",
    "test_acc",
    "wall_time_s",
];

/// One row per run. `epochs` and `test_acc` are empty when undefined;
/// `wall_time_s` is written only when `record_time` is set, so that the
/// file is otherwise a pure function of configuration and seeds.
pub fn write_records_csv<W: Write>(records: &[RunRecord], record_time: bool, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_HEADER)?;
    for r in records {
        csv.write_record([
            r.seed.to_string(),
            r.task.clone(),
            r.arch.clone(),
            r.alpha.to_string(),
            r.init_std.to_string(),
            r.converged.to_string(),
            r.epochs_to_converge.map(|e| e.to_string()).unwrap_or_default(),
            r.final_train_acc.to_string(),
            r.test_acc.map(|a| a.to_string()).unwrap_or_default(),
            if record_time { format!("{:.6}", r.wall_time_s) } else { String::new() },
        ])?;
    }
    csv.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}
