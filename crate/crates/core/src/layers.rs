//! Tanh summation layers and quasi-exponentiation product layers.
//!
//! A product neuron multiplies its inputs after passing each one through
//! [`quasi_pow`], a linear stand-in for `h^d` with `d = σ(w) ∈ (0, 1)`:
//!
//! ```text
//! y_i = Π_j (1 − σ(w_ij)(1 − h_j))
//! ```
//!
//! `d → 0` ignores the input (factor 1) and `d → 1` passes it through
//! unchanged (factor `h`), so with ±1 inputs the neuron can learn the sign
//! product of any subset of its inputs.
//!
//! Backward passes return *increments*: for an upstream signal
//! `delta = d − y` the returned weight matrix is `−∂E/∂W` with
//! `E = ½ Σ (d − y)²`, and updates are applied as `W += α · grad`.

use serde::{Deserialize, Serialize};

use crate::numerics::{dot, logistic, Matrix};
use crate::{Error, Result};

/// Below this magnitude a factor is not divided out of the cached product;
/// the partial product is recomputed directly instead.
pub const EPS_DIV: f64 = 1e-6;

/// Largest `f64` strictly below 1. Tanh outputs are clamped to
/// `[-TANH_BOUND, TANH_BOUND]` so they stay inside the open interval.
const TANH_BOUND: f64 = 1.0 - f64::EPSILON / 2.0;

/// Quasi-exponentiation `f(h, d) = 1 − d(1 − h)`.
///
/// Evaluated as `(1 − d) + d·h`, which makes `f(h, 1) = h`, `f(h, 0) = 1`,
/// `f(1, d) = 1` and `f(0, d) = 1 − d` hold exactly in floating point.
#[inline]
pub fn quasi_pow(h: f64, d: f64) -> f64 {
    (1.0 - d) + d * h
}

/// `Π_{k≠j} factors[k]` via the cached product `y = Π_k factors[k]`.
///
/// Divides `y` by `factors[j]` when that factor is safely away from zero and
/// falls back to [`partial_product_direct`] otherwise.
#[inline]
pub fn partial_product(y: f64, factors: &[f64], j: usize) -> f64 {
    let f = factors[j];
    if f.abs() > EPS_DIV {
        y / f
    } else {
        partial_product_direct(factors, j)
    }
}

/// Leave-one-out product computed by multiplication.
pub fn partial_product_direct(factors: &[f64], j: usize) -> f64 {
    factors
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &f)| f)
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "tanh")]
    TanhSum,
    #[serde(rename = "prod")]
    Product,
}

impl LayerKind {
    pub fn token(self) -> &'static str {
        match self {
            LayerKind::TanhSum => "tanh",
            LayerKind::Product => "prod",
        }
    }
}

/// Cached per-layer state from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// `σ(W)` as used by a product layer's forward pass; `None` for tanh layers.
    mixing: Option<Matrix>,
}

impl LayerActivations {
    pub fn new(input: Vec<f64>, output: Vec<f64>) -> Self {
        Self {
            input,
            output,
            mixing: None,
        }
    }
}

/// `h = tanh(W [x; 1])`. The last weight column is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhSumLayer {
    weights: Matrix,
}

impl TanhSumLayer {
    /// `weights` must be `out × (in + 1)`.
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() < 2 {
            return Err(Error::InvalidConfig(format!(
                "tanh layer weights must be out x (in + 1) with out, in >= 1; got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        Ok(Self { weights })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols() - 1
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.in_dim();
        if x.len() != n {
            return Err(Error::mismatch("tanh layer forward", n, x.len()));
        }
        Ok((0..self.out_dim())
            .map(|i| {
                let row = self.weights.row(i);
                let z = dot(&row[..n], x) + row[n];
                z.tanh().clamp(-TANH_BOUND, TANH_BOUND)
            })
            .collect())
    }

    /// `1 − h²` for unit `i`. Near saturation the cached `h` has rounded
    /// towards ±1, so the slope is recomputed as `sech²(z)` from the input.
    #[inline]
    fn slope(&self, i: usize, x: &[f64], h: f64) -> f64 {
        if h.abs() < 0.5 {
            return 1.0 - h * h;
        }
        let row = self.weights.row(i);
        let n = self.in_dim();
        let c = (dot(&row[..n], x) + row[n]).cosh();
        1.0 / (c * c)
    }

    /// Returns `(grad_w, delta_x)` for upstream signal `delta_h`.
    pub fn backward(&self, x: &[f64], h: &[f64], delta_h: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        let (n, m) = (self.in_dim(), self.out_dim());
        if x.len() != n {
            return Err(Error::mismatch("tanh layer backward input", n, x.len()));
        }
        if h.len() != m {
            return Err(Error::mismatch("tanh layer backward output", m, h.len()));
        }
        if delta_h.len() != m {
            return Err(Error::mismatch("tanh layer backward delta", m, delta_h.len()));
        }

        let mut grad = Matrix::zeros(m, n + 1);
        let mut delta_x = vec![0.0; n];
        for i in 0..m {
            let local = delta_h[i] * self.slope(i, x, h[i]);
            if local == 0.0 {
                continue;
            }
            let w = self.weights.row(i);
            let g = grad.row_mut(i);
            for j in 0..n {
                g[j] = local * x[j];
                delta_x[j] += local * w[j];
            }
            g[n] = local;
        }
        Ok((grad, delta_x))
    }
}

/// `y_i = Π_j quasi_pow(h_j, σ(w_ij))`. No bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductLayer {
    weights: Matrix,
}

impl ProductLayer {
    /// `weights` must be `out × in`.
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidConfig(format!(
                "product layer weights must be out x in with out, in >= 1; got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        Ok(Self { weights })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    /// `σ(W)`, the effective exponents.
    pub fn mixing(&self) -> Matrix {
        self.weights.map(logistic)
    }

    pub fn forward(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mixing = self.mixing();
        self.forward_with(&mixing, h)
    }

    fn forward_with(&self, mixing: &Matrix, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.in_dim() {
            return Err(Error::mismatch("product layer forward", self.in_dim(), h.len()));
        }
        Ok((0..self.out_dim())
            .map(|i| {
                mixing
                    .row(i)
                    .iter()
                    .zip(h)
                    .map(|(&d, &hj)| quasi_pow(hj, d))
                    .product()
            })
            .collect())
    }

    /// Returns `(grad_w, delta_h)` for upstream signal `delta_out`, given the
    /// cached input `h` and output `y` of the forward pass.
    pub fn backward(&self, h: &[f64], y: &[f64], delta_out: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        let mixing = self.mixing();
        self.backward_with(&mixing, h, y, delta_out)
    }

    fn backward_with(
        &self,
        mixing: &Matrix,
        h: &[f64],
        y: &[f64],
        delta_out: &[f64],
    ) -> Result<(Matrix, Vec<f64>)> {
        let (n, m) = (self.in_dim(), self.out_dim());
        if h.len() != n {
            return Err(Error::mismatch("product layer backward input", n, h.len()));
        }
        if y.len() != m {
            return Err(Error::mismatch("product layer backward output", m, y.len()));
        }
        if delta_out.len() != m {
            return Err(Error::mismatch("product layer backward delta", m, delta_out.len()));
        }

        let mut grad = Matrix::zeros(m, n);
        let mut delta_h = vec![0.0; n];
        let mut factors = vec![0.0; n];
        for i in 0..m {
            let delta = delta_out[i];
            if delta == 0.0 {
                continue;
            }
            let d_row = mixing.row(i);
            for (f, (&d, &hj)) in factors.iter_mut().zip(d_row.iter().zip(h)) {
                *f = quasi_pow(hj, d);
            }
            let g = grad.row_mut(i);
            for j in 0..n {
                let d = d_row[j];
                let scaled = delta * partial_product(y[i], &factors, j);
                g[j] = scaled * (h[j] - 1.0) * d * (1.0 - d);
                delta_h[j] += scaled * d;
            }
        }
        Ok((grad, delta_h))
    }
}

/// A live layer of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Layer {
    #[serde(rename = "tanh")]
    TanhSum(TanhSumLayer),
    #[serde(rename = "prod")]
    Product(ProductLayer),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::TanhSum(_) => LayerKind::TanhSum,
            Layer::Product(_) => LayerKind::Product,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::TanhSum(l) => l.in_dim(),
            Layer::Product(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::TanhSum(l) => l.out_dim(),
            Layer::Product(l) => l.out_dim(),
        }
    }

    pub fn weights(&self) -> &Matrix {
        match self {
            Layer::TanhSum(l) => l.weights(),
            Layer::Product(l) => l.weights(),
        }
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        match self {
            Layer::TanhSum(l) => l.weights_mut(),
            Layer::Product(l) => l.weights_mut(),
        }
    }

    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>> {
        match self {
            Layer::TanhSum(l) => l.forward(input),
            Layer::Product(l) => l.forward(input),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<LayerActivations> {
        match self {
            Layer::TanhSum(l) => {
                let output = l.forward(input)?;
                Ok(LayerActivations::new(input.to_vec(), output))
            }
            Layer::Product(l) => {
                let mixing = l.mixing();
                let output = l.forward_with(&mixing, input)?;
                Ok(LayerActivations {
                    input: input.to_vec(),
                    output,
                    mixing: Some(mixing),
                })
            }
        }
    }

    /// Returns `(grad_w, delta_in)` given this layer's cached activations.
    pub fn backward(&self, acts: &LayerActivations, delta: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        match self {
            Layer::TanhSum(l) => l.backward(&acts.input, &acts.output, delta),
            Layer::Product(l) => match &acts.mixing {
                Some(mixing) if mixing.shape() == l.weights().shape() => {
                    l.backward_with(mixing, &acts.input, &acts.output, delta)
                }
                _ => l.backward(&acts.input, &acts.output, delta),
            },
        }
    }
}
