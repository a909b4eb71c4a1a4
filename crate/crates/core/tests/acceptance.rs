//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Arguments select criteria by number (`cargo test --test acceptance -- 2 3`);
//! with none, all ten run. The spirals criterion trains ten large networks
//! for 10k epochs and dominates the runtime.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use quasinet::experiments::{
    best_hidden_size, default_sweep_sizes, run_batch, sweep_hidden, write_records_csv, RunRecord, SpiralParams,
    TrainConfig,
};
use quasinet::gradcheck::{check_network, random_samples, DEFAULT_EPS, DEFAULT_TOL};
use quasinet::layers::{partial_product, EPS_DIV};
use quasinet::{
    predict_correct, quasi_pow, Layer, LayerSpec, Matrix, Network, NetworkSpec, ProductLayer, RngState, TanhSumLayer,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// CSV files produced in-process by the training criteria, keyed by the
/// CLI arguments that should reproduce them byte for byte.
#[derive(Default)]
struct Artifacts {
    csv: BTreeMap<Vec<&'static str>, Vec<u8>>,
}

fn records_csv(records: &[RunRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records_csv(records, false, &mut buf).expect("csv");
    buf
}

fn spiral_spec() -> Vec<LayerSpec> {
    vec![
        LayerSpec::tanh(10),
        LayerSpec::product(80),
        LayerSpec::tanh(5),
        LayerSpec::product(1),
    ]
}

const TABLE: [(usize, usize); 6] = [(2, 2), (3, 4), (4, 6), (5, 7), (6, 12), (7, 15)];
const BASELINE_TABLE: [(usize, usize); 6] = [(2, 4), (3, 9), (4, 12), (5, 50), (6, 45), (7, 45)];

fn c1_gradient_oracle(_: &mut Artifacts) -> Outcome {
    let mut templates: Vec<NetworkSpec> = vec![NetworkSpec::new(2, spiral_spec(), 0.5)];
    for (n, h) in TABLE {
        templates.push(NetworkSpec::new(n, vec![LayerSpec::tanh(h), LayerSpec::product(1)], 1.0));
    }
    for (n, h) in BASELINE_TABLE {
        templates.push(NetworkSpec::mlp_baseline(n, h, 1, 1.0));
    }
    let networks = 8 * templates.len();
    let mut worst = 0.0f64;
    let mut worst_arch = String::new();
    let mut failures = 0;
    let mut checked = 0;
    for i in 0..networks {
        let spec = &templates[i % templates.len()];
        let root = RngState::new(1000 + i as u64);
        let net = Network::init(spec, &mut root.split(1)).unwrap();
        let samples = random_samples(&mut root.split(2), 3, spec.input_dim, 1).unwrap();
        let report = check_network(&net, &samples, DEFAULT_EPS, DEFAULT_TOL).unwrap();
        checked += report.entries.len();
        if !report.pass {
            failures += 1;
        }
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
            worst_arch = format!("{}→{}", spec.input_dim, spec.arch_string());
        }
    }
    Outcome::new(
        failures == 0 && networks >= 100,
        format!(
            "{networks} networks over {} architectures, {checked} gradients, max rel err {worst:.2e} ({worst_arch}), tol {DEFAULT_TOL:e}",
            templates.len()
        ),
    )
}

fn c2_quasi_pow_identities(_: &mut Artifacts) -> Outcome {
    let mut rng = RngState::new(2);
    let mut violations = 0;
    for _ in 0..10_000 {
        let h = 2.0 * rng.uniform() - 1.0;
        let d = rng.uniform();
        violations += usize::from(quasi_pow(h, 1.0) != h);
        violations += usize::from(quasi_pow(h, 0.0) != 1.0);
        violations += usize::from(quasi_pow(1.0, d) != 1.0);
        violations += usize::from(quasi_pow(0.0, d) != 1.0 - d);
    }
    Outcome::new(violations == 0, format!("10^4 points × 4 identities, {violations} inexact"))
}

fn c3_division_shortcut(_: &mut Artifacts) -> Outcome {
    let leave_one_out = |factors: &[f64], j: usize| -> f64 {
        let mut p = 1.0;
        for (k, &f) in factors.iter().enumerate() {
            if k != j {
                p *= f;
            }
        }
        p
    };
    let mut rng = RngState::new(3);
    let mut max_diff = 0.0f64;
    let mut divided = 0;
    let mut fallback = 0;
    let mut fallback_bad = 0;
    for _ in 0..10_000 {
        let len = 2 + (rng.uniform() * 11.0) as usize;
        let mut factors: Vec<f64> = (0..len).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        // Push one factor to or below the threshold.
        let tiny = [0.0, 1e-6, -1e-6, 5e-7, -3e-9, 1e-300];
        let k = (rng.uniform() * len as f64) as usize;
        if rng.uniform() < 0.5 {
            factors[k] = tiny[(rng.uniform() * tiny.len() as f64) as usize];
        }
        let y: f64 = factors.iter().product();
        for j in 0..len {
            let got = partial_product(y, &factors, j);
            let want = leave_one_out(&factors, j);
            if factors[j].abs() > EPS_DIV {
                divided += 1;
                max_diff = max_diff.max((got - want).abs());
            } else {
                fallback += 1;
                if !got.is_finite() || (got - want).abs() > 1e-15 {
                    fallback_bad += 1;
                }
            }
        }
    }
    Outcome::new(
        max_diff <= 1e-10 && fallback_bad == 0 && fallback > 0,
        format!("{divided} divided (max diff {max_diff:.1e}), {fallback} fallback ({fallback_bad} wrong or non-finite)"),
    )
}

fn c4_exact_parity(_: &mut Artifacts) -> Outcome {
    let mut wrong = 0;
    let mut patterns = 0;
    for n in 1..=10usize {
        let mut hidden = Matrix::zeros(n, n + 1);
        for i in 0..n {
            hidden.set(i, i, 1000.0);
        }
        let out = Matrix::from_vec(1, n, vec![40.0; n]).unwrap();
        let net = Network::from_layers(
            n,
            vec![
                Layer::TanhSum(TanhSumLayer::new(hidden).unwrap()),
                Layer::Product(ProductLayer::new(out).unwrap()),
            ],
        )
        .unwrap();
        for code in 0..(1u32 << n) {
            let x: Vec<f64> = (0..n).map(|j| if code >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let odd = code.count_ones() % 2 == 1;
            let d = if odd { -1.0 } else { 1.0 };
            patterns += 1;
            if !predict_correct(&net.output(&x).unwrap(), &[d]) {
                wrong += 1;
            }
        }
    }
    Outcome::new(wrong == 0, format!("n = 1..10, {patterns} patterns, {wrong} misclassified"))
}

fn c5_xor(art: &mut Artifacts) -> Outcome {
    let result = run_batch(&TrainConfig::xor()).unwrap();
    let s = &result.summary;
    art.csv.insert(vec!["xor"], records_csv(&result.records));
    Outcome::new(
        s.converged >= 98,
        format!(
            "tanh:2,prod:1, 500 epochs: {}/{} converged (need ≥ 98), median epochs {}",
            s.converged, s.runs, s.median_epochs
        ),
    )
}

fn c6_parity_table(art: &mut Artifacts) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, h) in TABLE {
        let result = run_batch(&TrainConfig::parity(n, h)).unwrap();
        let s = &result.summary;
        pass &= s.converged >= 95;
        parts.push(format!("p{n}/h{h} {}", s.converged));
        if n == 7 {
            pass &= s.median_epochs < 500.0;
            parts.push(format!("p7 median epochs {}", s.median_epochs));
            art.csv.insert(vec!["parity", "--n", "7"], records_csv(&result.records));
        }
    }
    Outcome::new(pass, format!("{} (need ≥ 95 each, median < 500)", parts.join(", ")))
}

fn c7_baseline(art: &mut Artifacts) -> Outcome {
    let quasi = run_batch(&TrainConfig::parity(5, 7)).unwrap().summary.converged;
    let result = run_batch(&TrainConfig::parity_baseline(5, 50)).unwrap();
    let mlp = result.summary.converged;
    art.csv.insert(vec!["parity", "--n", "5", "--baseline"], records_csv(&result.records));
    Outcome::new(
        mlp < quasi && mlp <= 80,
        format!("parity 5: MLP tanh:50,tanh:1 {mlp}/100 vs QuasiNet tanh:7,prod:1 {quasi}/100 (need MLP < QuasiNet and ≤ 80)"),
    )
}

fn c8_sweeps(art: &mut Artifacts) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [4usize, 6] {
        let points = sweep_hidden(&TrainConfig::parity(n, n), &default_sweep_sizes(n), false, |_| {}).unwrap();
        let best = best_hidden_size(&points).unwrap();
        let (lo, hi) = (n - 2, 2 * n + 2);
        pass &= (lo..=hi).contains(&best);
        let counts: Vec<String> = points
            .iter()
            .map(|p| format!("{}:{}", p.hidden, p.summary.converged))
            .collect();
        parts.push(format!("parity {n}: best h = {best} in [{lo}, {hi}] ({})", counts.join(" ")));
        if n == 4 {
            let records: Vec<RunRecord> = points.iter().flat_map(|p| p.records.iter().cloned()).collect();
            art.csv.insert(vec!["sweep", "--n", "4"], records_csv(&records));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

fn c9_spirals(_: &mut Artifacts) -> Outcome {
    let config = TrainConfig::spirals(SpiralParams::default());
    let result = run_batch(&config).unwrap();
    let s = &result.summary;
    let mean_test = s.mean_test_acc.unwrap_or(0.0);
    let tests: Vec<String> = result
        .records
        .iter()
        .map(|r| format!("{:.3}", r.test_acc.unwrap_or(0.0)))
        .collect();
    Outcome::new(
        mean_test >= 0.95 && s.converged >= 1,
        format!(
            "mean test acc {:.4} (need ≥ 0.95), {} of {} fully converged (need ≥ 1), per run [{}]",
            mean_test,
            s.converged,
            s.runs,
            tests.join(" ")
        ),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_quasinet"))
        .args(args)
        .arg("--quiet")
        .arg("--out-csv")
        .arg(out)
        .output()
        .expect("run quasinet");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out).expect("read csv")
}

fn c10_reproducibility(art: &mut Artifacts) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;

    // Same command twice, with different worker counts.
    let cheap: [&[&str]; 3] = [
        &["xor"],
        &["parity", "--n", "7"],
        &["spirals", "--epochs", "200", "--runs", "3", "--points", "400"],
    ];
    for args in cheap {
        let a = run_cli(&[args, &["--jobs", "1"]].concat(), &dir.path().join("a.csv"));
        let b = run_cli(&[args, &["--jobs", "2"]].concat(), &dir.path().join("b.csv"));
        let same = a == b;
        pass &= same;
        parts.push(format!("`{}` twice: {}", args.join(" "), if same { "identical" } else { "DIFFERENT" }));
    }

    // The binary reproduces the CSVs generated by the criteria above.
    for (args, expected) in &art.csv {
        let got = run_cli(args, &dir.path().join("c.csv"));
        let same = &got == expected;
        pass &= same;
        parts.push(format!("`{}` vs in-process: {}", args.join(" "), if same { "identical" } else { "DIFFERENT" }));
    }
    Outcome::new(pass, parts.join("; "))
}

type Criterion = fn(&mut Artifacts) -> Outcome;

fn main() {
    let criteria: [(usize, &str, Criterion); 10] = [
        (1, "gradient oracle", c1_gradient_oracle),
        (2, "quasi_pow identities", c2_quasi_pow_identities),
        (3, "division shortcut", c3_division_shortcut),
        (4, "exact parity construction", c4_exact_parity),
        (5, "minimal XOR", c5_xor),
        (6, "parity table", c6_parity_table),
        (7, "baseline contrast", c7_baseline),
        (8, "hidden-size sweeps", c8_sweeps),
        (9, "two spirals", c9_spirals),
        (10, "reproducibility", c10_reproducibility),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut art = Artifacts::default();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = run(&mut art);
        ran += 1;
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
