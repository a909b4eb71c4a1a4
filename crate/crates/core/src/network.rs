//! Layer stacks: initialization, forward/backward through arbitrary
//! tanh/product interleavings, and online SGD.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::experiments::Dataset;
use crate::layers::{Layer, LayerActivations, LayerKind, ProductLayer, TanhSumLayer};
use crate::numerics::{Matrix, RngState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub size: usize,
}

impl LayerSpec {
    pub fn tanh(size: usize) -> Self {
        Self {
            kind: LayerKind::TanhSum,
            size,
        }
    }

    pub fn product(size: usize) -> Self {
        Self {
            kind: LayerKind::Product,
            size,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.token(), self.size)
    }
}

/// Architecture plus the Gaussian initialization used to instantiate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub init_std: f64,
    pub init_mean: f64,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, init_std: f64) -> Self {
        Self {
            input_dim,
            layers,
            init_std,
            init_mean: 0.0,
        }
    }

    /// Two stacked tanh layers, the classical MLP used as a baseline.
    pub fn mlp_baseline(input_dim: usize, hidden: usize, outputs: usize, init_std: f64) -> Self {
        Self::new(
            input_dim,
            vec![LayerSpec::tanh(hidden), LayerSpec::tanh(outputs)],
            init_std,
        )
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.size)
    }

    /// Comma-separated `kind:size` tokens, e.g. `tanh:10,prod:1`.
    pub fn arch_string(&self) -> String {
        self.layers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        if let Some(l) = self.layers.iter().find(|l| l.size == 0) {
            return Err(Error::InvalidConfig(format!("layer {l} has zero size")));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init_std must be positive, got {}",
                self.init_std
            )));
        }
        if !self.init_mean.is_finite() {
            return Err(Error::InvalidConfig("init_mean must be finite".into()));
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean over patterns of `½ Σ_i (d_i − y_i)²`, measured before each update.
    pub mean_error: f64,
    /// Patterns whose pre-update output had the correct sign everywhere.
    pub correct: usize,
    pub all_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr")]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

#[derive(Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        Network::from_layers(repr.input_dim, repr.layers)
    }
}

impl Network {
    /// Every weight, tanh biases included, drawn i.i.d. from
    /// N(init_mean, init_std²) in layer order, row-major.
    pub fn init(spec: &NetworkSpec, rng: &mut RngState) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut fan_in = spec.input_dim;
        for ls in &spec.layers {
            let cols = match ls.kind {
                LayerKind::TanhSum => fan_in + 1,
                LayerKind::Product => fan_in,
            };
            let data = (0..ls.size * cols)
                .map(|_| rng.gaussian(spec.init_mean, spec.init_std))
                .collect();
            let weights = Matrix::from_vec(ls.size, cols, data)?;
            layers.push(match ls.kind {
                LayerKind::TanhSum => Layer::TanhSum(TanhSumLayer::new(weights)?),
                LayerKind::Product => Layer::Product(ProductLayer::new(weights)?),
            });
            fan_in = ls.size;
        }
        Ok(Self {
            input_dim: spec.input_dim,
            layers,
        })
    }

    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        let mut fan_in = input_dim;
        for layer in &layers {
            if layer.out_dim() == 0 {
                return Err(Error::InvalidConfig("layer with zero outputs".into()));
            }
            if layer.in_dim() != fan_in {
                return Err(Error::mismatch("layer chaining", fan_in, layer.in_dim()));
            }
            fan_in = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights().as_slice().len()).sum()
    }

    pub fn arch_string(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("{}:{}", l.kind().token(), l.out_dim()))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Runs every layer and returns their cached activations in order; the
    /// last entry's output is the network output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<LayerActivations>> {
        if x.len() != self.input_dim {
            return Err(Error::mismatch("network input", self.input_dim, x.len()));
        }
        let mut acts: Vec<LayerActivations> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = acts.last().map_or(x, |a| a.output.as_slice());
            let a = layer.forward(input)?;
            acts.push(a);
        }
        Ok(acts)
    }

    /// Network output without keeping intermediate activations.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::mismatch("network input", self.input_dim, x.len()));
        }
        let mut current = x.to_vec();
        for layer in &self.layers {
            current = layer.output(&current)?;
        }
        Ok(current)
    }

    /// Weight increments for every layer, starting from the output error
    /// `target − y` and chaining each layer's input delta downward.
    pub fn backward(&self, acts: &[LayerActivations], target: &[f64]) -> Result<Vec<Matrix>> {
        if acts.len() != self.layers.len() {
            return Err(Error::mismatch("backward activations", self.layers.len(), acts.len()));
        }
        let y = &acts[acts.len() - 1].output;
        if target.len() != y.len() {
            return Err(Error::mismatch("backward target", y.len(), target.len()));
        }
        let mut delta: Vec<f64> = target.iter().zip(y).map(|(d, y)| d - y).collect();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (idx, (layer, a)) in self.layers.iter().zip(acts).enumerate().rev() {
            let (grad, delta_in) = layer.backward(a, &delta)?;
            grads.push(grad);
            if idx > 0 {
                delta = delta_in;
            }
        }
        grads.reverse();
        Ok(grads)
    }

    /// `W ← W + alpha · grad` for every layer.
    pub fn sgd_step(&mut self, grads: &[Matrix], alpha: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::mismatch("sgd_step layers", self.layers.len(), grads.len()));
        }
        if self
            .layers
            .iter()
            .zip(grads)
            .any(|(l, g)| l.weights().shape() != g.shape())
        {
            return Err(Error::InvalidConfig("gradient shape does not match weights".into()));
        }
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            layer.weights_mut().add_scaled(grad, alpha)?;
        }
        Ok(())
    }

    /// One online update on a single pattern. Returns the pre-update loss and
    /// whether the pre-update output was correct.
    pub fn train_pattern(&mut self, x: &[f64], target: &[f64], alpha: f64) -> Result<(f64, bool)> {
        let acts = self.forward(x)?;
        let y = &acts[acts.len() - 1].output;
        let err = squared_error(y, target);
        let correct = predict_correct(y, target);
        let grads = self.backward(&acts, target)?;
        self.sgd_step(&grads, alpha)?;
        Ok((err, correct))
    }

    /// One pass over `data` in an order shuffled by `rng`, updating after
    /// every pattern.
    pub fn train_epoch(&mut self, data: &Dataset, alpha: f64, rng: &mut RngState) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut correct = 0;
        for &idx in &order {
            let (err, ok) = self.train_pattern(&data.inputs()[idx], &data.targets()[idx], alpha)?;
            total += err;
            correct += usize::from(ok);
        }
        Ok(EpochStats {
            mean_error: total / data.len() as f64,
            correct,
            all_correct: correct == data.len(),
        })
    }

    /// Fraction of patterns classified correctly, without training.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (x, d) in data.inputs().iter().zip(data.targets()) {
            correct += usize::from(predict_correct(&self.output(x)?, d));
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Pattern loss `½ Σ_i (d_i − y_i)²`.
pub fn squared_error(y: &[f64], target: &[f64]) -> f64 {
    0.5 * y
        .iter()
        .zip(target)
        .map(|(y, d)| (d - y) * (d - y))
        .sum::<f64>()
}

/// True iff every output has the same (nonzero) sign as its target.
pub fn predict_correct(y: &[f64], target: &[f64]) -> bool {
    y.len() == target.len()
        && y.iter()
            .zip(target)
            .all(|(&y, &d)| y != 0.0 && d != 0.0 && (y > 0.0) == (d > 0.0))
}
