//! Benchmark datasets: n-bit parity (XOR is 2-parity) and two interleaved
//! spirals. Logical values are encoded as −1 / +1 throughout.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::numerics::RngState;
use crate::{Error, Result};

/// Largest parity order the generator accepts.
pub const MAX_PARITY_BITS: usize = 20;

/// Spiral coordinates are divided by `(1 + SPIRAL_MARGIN) · max|coord|`, so
/// the outermost point sits at `1 / 1.05` of the unit box.
pub const SPIRAL_MARGIN: f64 = 0.05;

/// Input/target pattern pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::mismatch("dataset targets", inputs.len(), targets.len()));
        }
        if let Some(first) = inputs.first() {
            if let Some(x) = inputs.iter().find(|x| x.len() != first.len()) {
                return Err(Error::mismatch("dataset input width", first.len(), x.len()));
            }
        }
        if let Some(first) = targets.first() {
            if let Some(d) = targets.iter().find(|d| d.len() != first.len()) {
                return Err(Error::mismatch("dataset target width", first.len(), d.len()));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Writes `x,y,label` rows for a two-dimensional, single-target dataset.
    pub fn write_points_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.input_dim() != 2 || self.target_dim() != 1 {
            return Err(Error::InvalidConfig(
                "point export needs 2-d inputs and a single target".into(),
            ));
        }
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["x", "y", "label"])?;
        for (x, d) in self.inputs.iter().zip(&self.targets) {
            csv.write_record([x[0].to_string(), x[1].to_string(), d[0].to_string()])?;
        }
        csv.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// All `2^n` inputs over {−1, +1}^n with target `Π_j x_j`.
///
/// Patterns are enumerated in binary order with bit `n − 1 − j` of the index
/// selecting −1 for input `j`, so index 0 is the all-(+1) pattern.
pub fn make_parity(n: usize) -> Result<Dataset> {
    if !(1..=MAX_PARITY_BITS).contains(&n) {
        return Err(Error::InvalidConfig(format!(
            "parity order must be in 1..={MAX_PARITY_BITS}, got {n}"
        )));
    }
    let count = 1usize << n;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for idx in 0..count {
        let x: Vec<f64> = (0..n)
            .map(|j| if (idx >> (n - 1 - j)) & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        targets.push(vec![x.iter().product()]);
        inputs.push(x);
    }
    Dataset::new(inputs, targets)
}

pub fn make_xor() -> Dataset {
    make_parity(2).expect("2-parity is always valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub n_points: usize,
    pub turns: f64,
    pub train_fraction: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            n_points: 2000,
            turns: 3.0,
            train_fraction: 0.8,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl SpiralParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 4 || !self.n_points.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "spiral point count must be even and >= 4, got {}",
                self.n_points
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.turns.is_finite() && self.turns > 0.0) {
            return Err(Error::InvalidConfig(format!("turns must be positive, got {}", self.turns)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Two interleaved Archimedean spirals split into `(train, test)`.
///
/// With `m = n_points / 2`, point `k ∈ 1..=m` of spiral 0 sits at radius
/// `t = k / m` and angle `t · turns · 2π`, i.e. `(t sin φ, t cos φ)`; spiral 1
/// is its point reflection. The origin is never sampled, so the two classes
/// share no point. Spiral 0 is labelled −1, spiral 1 +1. The split is
/// stratified: each class contributes `round(train_fraction · m)` points to
/// the training set.
pub fn make_spirals(params: &SpiralParams, rng: &mut RngState) -> Result<(Dataset, Dataset)> {
    params.validate()?;
    let m = params.n_points / 2;
    let mut classes: [Vec<[f64; 2]>; 2] = [Vec::with_capacity(m), Vec::with_capacity(m)];
    for k in 1..=m {
        let t = k as f64 / m as f64;
        let phi = t * params.turns * 2.0 * PI;
        let (s, c) = phi.sin_cos();
        classes[0].push([t * s, t * c]);
        classes[1].push([-t * s, -t * c]);
    }
    if params.noise_std > 0.0 {
        for p in classes.iter_mut().flatten() {
            p[0] += rng.gaussian(0.0, params.noise_std);
            p[1] += rng.gaussian(0.0, params.noise_std);
        }
    }
    let max_abs = classes
        .iter()
        .flatten()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = 1.0 / ((1.0 + SPIRAL_MARGIN) * max_abs);

    let n_train = (params.train_fraction * m as f64).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, points) in classes.iter().enumerate() {
        let label = if class == 0 { -1.0 } else { 1.0 };
        let mut order: Vec<usize> = (0..m).collect();
        rng.shuffle(&mut order);
        for (rank, &idx) in order.iter().enumerate() {
            let p = points[idx];
            let item = (vec![p[0] * scale, p[1] * scale], vec![label]);
            if rank < n_train {
                train.push(item);
            } else {
                test.push(item);
            }
        }
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut test);

    let into_dataset = |items: Vec<(Vec<f64>, Vec<f64>)>| {
        let (inputs, targets) = items.into_iter().unzip();
        Dataset::new(inputs, targets)
    };
    Ok((into_dataset(train)?, into_dataset(test)?))
}
