//! The `quasinet` command line.
//!
//! Summary tables go to standard output, per-run progress to standard
//! error. Exit status: 0 on success, 1 on I/O failure, 2 on a usage or
//! configuration error, 3 when `gradcheck` finds a mismatch.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::experiments::{
    self, baseline_table_hidden, default_sweep_sizes, quasinet_table_hidden, BatchResult, BatchSummary, RunRecord,
    SpiralParams, SweepPoint, TrainConfig,
};
use crate::gradcheck::{self, GradCheckReport, DEFAULT_EPS, DEFAULT_TOL};
use crate::layers::LayerKind;
use crate::network::{LayerSpec, Network, NetworkSpec};
use crate::numerics::RngState;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GRADCHECK_FAILED: i32 = 3;

const SPIRAL_ARCH: &str = "tanh:10,prod:80,tanh:5,prod:1";

/// Parses comma-separated `kind:size` tokens with `kind` in `tanh`, `prod`.
pub fn parse_architecture(s: &str) -> Result<Vec<LayerSpec>> {
    let bad = |token: &str, reason: String| Error::InvalidArchitecture {
        token: token.to_string(),
        reason,
    };
    if s.trim().is_empty() {
        return Err(bad(s, "architecture is empty".into()));
    }
    s.split(',')
        .map(|raw| {
            let token = raw.trim();
            let (kind, size) = token
                .split_once(':')
                .ok_or_else(|| bad(token, "expected `kind:size`".into()))?;
            let kind = match kind.trim() {
                "tanh" => LayerKind::TanhSum,
                "prod" => LayerKind::Product,
                other => return Err(bad(token, format!("unsupported layer kind `{other}` (use tanh or prod)"))),
            };
            let size: usize = size
                .trim()
                .parse()
                .map_err(|_| bad(token, format!("size `{}` is not a positive integer", size.trim())))?;
            if size == 0 {
                return Err(bad(token, "size must be at least 1".into()));
            }
            Ok(LayerSpec { kind, size })
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "quasinet", version, about = "Product-layer neural networks: parity, spirals and gradient checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimal XOR (default tanh:2,prod:1, 500 epochs, 100 runs).
    Xor(XorArgs),
    /// n-parity with the tabulated hidden size for n (10k epochs, 100 runs).
    Parity(ParityArgs),
    /// Two interleaved spirals (tanh:10,prod:80,tanh:5,prod:1, α 0.01, std 0.5).
    Spirals(SpiralArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Convergence of `tanh:h,prod:1` (or `tanh:h,tanh:1`) over hidden sizes.
    Sweep(SweepArgs),
}

/// Settings shared by every training subcommand.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Learning rate [default: 0.9; spirals 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Standard deviation of the Gaussian weight init [default: 1.0; spirals 0.5].
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Epoch cap [default: xor 500, parity 10000 (parity 8: 5000), spirals 10000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of independently seeded runs [default: 100; spirals 10].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Seed of the first run; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Consecutive all-correct epochs (or spiral checks) required to converge.
    #[arg(long, default_value_t = experiments::DEFAULT_WINDOW)]
    pub window: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Per-run results as CSV.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Configuration echo and summary statistics as JSON.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Fill the wall_time_s CSV column (makes the file run-dependent).
    #[arg(long)]
    pub record_time: bool,
    /// Suppress per-run progress on standard error.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct XorArgs {
    /// Layers after the input, e.g. `tanh:2,prod:1` [default: tanh:2,prod:1; baseline tanh:4,tanh:1].
    #[arg(long)]
    pub arch: Option<String>,
    /// Use the tanh-tanh MLP baseline.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ParityArgs {
    /// Number of input bits.
    #[arg(long)]
    pub n: usize,
    /// Layers after the input [default: tabulated hidden size for n, else n].
    #[arg(long)]
    pub arch: Option<String>,
    /// Use the tanh-tanh MLP baseline.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SpiralArgs {
    /// Layers after the input.
    #[arg(long, default_value = SPIRAL_ARCH)]
    pub arch: String,
    /// Total number of points over both spirals.
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    /// Turns of each spiral.
    #[arg(long, default_value_t = 3.0)]
    pub turns: f64,
    /// Fraction of each class used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Standard deviation of Gaussian coordinate noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Seed of the dataset (independent of the run seeds).
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Epochs between train/test accuracy checks.
    #[arg(long, default_value_t = 10)]
    pub sample_every: usize,
    /// Write the training points as `x,y,label` CSV.
    #[arg(long)]
    pub export_train: Option<PathBuf>,
    /// Write the test points as `x,y,label` CSV.
    #[arg(long)]
    pub export_test: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Layers after the input.
    #[arg(long, default_value = SPIRAL_ARCH)]
    pub arch: String,
    /// Input dimension of the network.
    #[arg(long, default_value_t = 2)]
    pub input_dim: usize,
    /// Random (input, ±1 target) samples to check.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Seed for the weights and the samples.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the Gaussian weight init.
    #[arg(long, default_value_t = 0.5)]
    pub init_std: f64,
    /// Full report as JSON; without it the report is printed to standard output.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Parity order (2 is XOR).
    #[arg(long)]
    pub n: usize,
    /// Hidden sizes as `a..b` (inclusive) or `a,b,c` [default: max(1, n-2)..2n+4].
    #[arg(long)]
    pub sizes: Option<String>,
    /// Sweep the tanh-tanh MLP baseline instead.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::DimensionMismatch { .. } | Error::InvalidConfig(_) | Error::InvalidArchitecture { .. } => EXIT_USAGE,
    }
}

/// Runs a parsed command and returns its exit status.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut (dyn Write + Send)) -> Result<i32> {
    match cli.command {
        Command::Xor(a) => {
            let mut config = TrainConfig::xor();
            if a.baseline {
                config.spec = NetworkSpec::mlp_baseline(2, baseline_table_hidden(2).unwrap_or(2), 1, 1.0);
            }
            run_training(config, a.arch.as_deref(), &a.train, out, err)
        }
        Command::Parity(a) => {
            let config = if a.baseline {
                TrainConfig::parity_baseline(a.n, baseline_table_hidden(a.n).unwrap_or(a.n))
            } else {
                TrainConfig::parity(a.n, quasinet_table_hidden(a.n).unwrap_or(a.n))
            };
            run_training(config, a.arch.as_deref(), &a.train, out, err)
        }
        Command::Spirals(a) => {
            let params = SpiralParams {
                n_points: a.points,
                turns: a.turns,
                train_fraction: a.train_fraction,
                noise_std: a.noise,
                seed: a.data_seed,
            };
            let mut config = TrainConfig::spirals(params);
            config.sample_every = a.sample_every;
            if a.export_train.is_some() || a.export_test.is_some() {
                params.validate()?;
                let (train, test) = config.task.datasets()?;
                if let Some(path) = &a.export_train {
                    write_file(path, |w| train.write_points_csv(w))?;
                }
                if let (Some(path), Some(test)) = (&a.export_test, &test) {
                    write_file(path, |w| test.write_points_csv(w))?;
                }
            }
            run_training(config, Some(&a.arch), &a.train, out, err)
        }
        Command::Gradcheck(a) => run_gradcheck(&a, out),
        Command::Sweep(a) => run_sweep(&a, out, err),
    }
}

fn apply_train_args(config: &mut TrainConfig, arch: Option<&str>, a: &TrainArgs) -> Result<()> {
    if let Some(arch) = arch {
        config.spec.layers = parse_architecture(arch)?;
    }
    if let Some(lr) = a.lr {
        config.alpha = lr;
    }
    if let Some(std) = a.init_std {
        config.spec.init_std = std;
    }
    if let Some(epochs) = a.epochs {
        config.max_epochs = epochs;
    }
    if let Some(runs) = a.runs {
        config.runs = runs;
    }
    config.base_seed = a.seed;
    config.convergence_window = a.window;
    config.jobs = a.jobs;
    config.validate()
}

fn run_training(
    mut config: TrainConfig,
    arch: Option<&str>,
    a: &TrainArgs,
    out: &mut dyn Write,
    err: &mut (dyn Write + Send),
) -> Result<i32> {
    apply_train_args(&mut config, arch, a)?;
    check_writable(&a.out_csv)?;
    check_writable(&a.out_json)?;
    let quiet = a.quiet;
    let err = Mutex::new(err);
    let result = experiments::run_batch_with(&config, |r| {
        if !quiet {
            if let Ok(mut e) = err.lock() {
                let _ = writeln!(e, "{}", progress_line(r));
            }
        }
    })?;
    write_outputs(&result.records, a, || result.summary_json())?;
    write_summary_table(out, &result)?;
    Ok(EXIT_OK)
}

fn progress_line(r: &RunRecord) -> String {
    let epochs = r
        .epochs_to_converge
        .map_or_else(|| format!("not converged after {}", r.epochs_run), |e| format!("converged at {e}"));
    let test = r.test_acc.map(|t| format!(", test {t:.4}")).unwrap_or_default();
    format!("seed {}: {epochs}, train {:.4}{test}", r.seed, r.final_train_acc)
}

fn write_outputs<F>(records: &[RunRecord], a: &TrainArgs, json: F) -> Result<()>
where
    F: FnOnce() -> Result<String>,
{
    if let Some(path) = &a.out_csv {
        write_file(path, |w| experiments::write_records_csv(records, a.record_time, w))?;
    }
    if let Some(path) = &a.out_json {
        let text = json()?;
        write_file(path, |w| {
            w.write_all(text.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| Error::io(path.display().to_string(), e))
        })?;
    }
    Ok(())
}

fn write_summary_table(out: &mut dyn Write, result: &BatchResult) -> Result<()> {
    let s = &result.summary;
    let rows = [
        ("task", result.config.task.label()),
        ("arch", result.config.spec.arch_string()),
        ("alpha", result.config.alpha.to_string()),
        ("init_std", result.config.spec.init_std.to_string()),
        ("max_epochs", s.max_epochs.to_string()),
        ("runs", s.runs.to_string()),
        ("converged", s.converged.to_string()),
        ("mean_epochs", format!("{:.2}", s.mean_epochs)),
        ("std_epochs", format!("{:.2}", s.std_epochs)),
        ("median_epochs", format!("{:.1}", s.median_epochs)),
        ("mean_train_acc", format!("{:.4}", s.mean_final_train_acc)),
    ];
    let stdout_err = |e| Error::io("standard output", e);
    for (k, v) in rows {
        writeln!(out, "{k:<16}{v}").map_err(stdout_err)?;
    }
    if let (Some(m), Some(sd)) = (s.mean_test_acc, s.std_test_acc) {
        writeln!(out, "{:<16}{m:.4} ± {sd:.4}", "mean_test_acc").map_err(stdout_err)?;
    }
    Ok(())
}

fn run_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = NetworkSpec::new(a.input_dim, parse_architecture(&a.arch)?, a.init_std);
    spec.validate()?;
    if a.samples == 0 {
        return Err(Error::InvalidConfig("--samples must be >= 1".into()));
    }
    if !(a.eps.is_finite() && a.eps > 0.0) || !(a.tol.is_finite() && a.tol > 0.0) {
        return Err(Error::InvalidConfig("--eps and --tol must be positive".into()));
    }
    check_writable(&a.out_json)?;
    let root = RngState::new(a.seed);
    let net = Network::init(&spec, &mut root.split(1))?;
    let samples = gradcheck::random_samples(&mut root.split(2), a.samples, spec.input_dim, spec.output_dim())?;
    let report = gradcheck::check_network(&net, &samples, a.eps, a.tol)?;
    let json = serde_json::to_string_pretty(&report)?;
    let stdout_err = |e| Error::io("standard output", e);
    match &a.out_json {
        Some(path) => {
            write_file(path, |w| {
                w.write_all(json.as_bytes())
                    .and_then(|_| w.write_all(b"\n"))
                    .map_err(|e| Error::io(path.display().to_string(), e))
            })?;
            write_gradcheck_table(out, &spec, &report).map_err(stdout_err)?;
        }
        None => writeln!(out, "{json}").map_err(stdout_err)?,
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_GRADCHECK_FAILED })
}

fn write_gradcheck_table(out: &mut dyn Write, spec: &NetworkSpec, r: &GradCheckReport) -> std::io::Result<()> {
    writeln!(out, "{:<16}{}", "arch", spec.arch_string())?;
    writeln!(out, "{:<16}{}", "params", r.params)?;
    writeln!(out, "{:<16}{}", "samples", r.samples)?;
    writeln!(out, "{:<16}{:e}", "max_rel_err", r.max_rel_err)?;
    writeln!(out, "{:<16}{:e}", "tol", r.tol)?;
    writeln!(out, "{:<16}{}", "pass", r.pass)
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("hidden sizes `{s}`: expected `a..b` or `a,b,c` of positive integers"));
    let num = |t: &str| t.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
    let sizes: Vec<usize> = match s.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            if lo > hi {
                return Err(bad());
            }
            (lo..=hi).collect()
        }
        None => s.split(',').map(num).collect::<Result<_>>()?,
    };
    Ok(sizes)
}

fn run_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut (dyn Write + Send)) -> Result<i32> {
    let mut base = if a.baseline {
        TrainConfig::parity_baseline(a.n, a.n)
    } else {
        TrainConfig::parity(a.n, a.n)
    };
    apply_train_args(&mut base, None, &a.train)?;
    let sizes = match &a.sizes {
        Some(s) => parse_sizes(s)?,
        None => default_sweep_sizes(a.n),
    };
    check_writable(&a.train.out_csv)?;
    check_writable(&a.train.out_json)?;
    let quiet = a.train.quiet;
    let points = experiments::sweep_hidden(&base, &sizes, a.baseline, |p| {
        if !quiet {
            let _ = writeln!(
                err,
                "hidden {}: {}/{} converged, median epochs {:.1}",
                p.hidden, p.summary.converged, p.summary.runs, p.summary.median_epochs
            );
        }
    })?;
    let best = experiments::best_hidden_size(&points);

    if a.train.out_csv.is_some() || a.train.out_json.is_some() {
        let records: Vec<RunRecord> = points.iter().flat_map(|p| p.records.iter().cloned()).collect();
        write_outputs(&records, &a.train, || sweep_json(&base, a.baseline, &points, best))?;
    }

    let stdout_err = |e| Error::io("standard output", e);
    writeln!(
        out,
        "{:<8}{:>10}{:>14}{:>16}",
        "hidden", "converged", "mean_epochs", "median_epochs"
    )
    .map_err(stdout_err)?;
    for p in &points {
        let s: &BatchSummary = &p.summary;
        writeln!(
            out,
            "{:<8}{:>10}{:>14.2}{:>16.1}",
            p.hidden, s.converged, s.mean_epochs, s.median_epochs
        )
        .map_err(stdout_err)?;
    }
    if let Some(b) = best {
        writeln!(out, "best hidden size: {b}").map_err(stdout_err)?;
    }
    Ok(EXIT_OK)
}

fn sweep_json(base: &TrainConfig, baseline: bool, points: &[SweepPoint], best: Option<usize>) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Doc<'a> {
        config: &'a TrainConfig,
        baseline: bool,
        best_hidden: Option<usize>,
        points: &'a [SweepPoint],
    }
    Ok(serde_json::to_string_pretty(&Doc {
        config: base,
        baseline,
        best_hidden: best,
        points,
    })?)
}

/// Fails early, before any training, if `path` cannot be created.
fn check_writable(path: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = path {
        File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
