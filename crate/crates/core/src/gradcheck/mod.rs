//! Central finite-difference check of [`Network::backward`].
//!
//! The oracle differentiates `J = −½ Σ (d − y)²`, the objective the trainer
//! ascends, so the increments returned by `backward` should equal `∂J/∂w`
//! exactly, sign included. `J` is evaluated by an independent double-double
//! forward pass (see [`extended`]) so that the difference quotient is limited
//! by its `O(eps²)` truncation error rather than by `f64` rounding.

pub mod extended;

use serde::Serialize;

use crate::experiments::Dataset;
use crate::network::Network;
use crate::numerics::{Matrix, RngState};
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Position of one weight: layer index, then row and column of its matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCoord {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub sample: usize,
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tol: f64,
    pub params: usize,
    pub samples: usize,
    pub max_rel_err: f64,
    /// Entry with the largest relative error.
    pub worst: Option<GradCheckEntry>,
    pub pass: bool,
    pub entries: Vec<GradCheckEntry>,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn central_difference(net: &Network, x: &[f64], d: &[f64], coord: ParamCoord, eps: f64) -> f64 {
    let at = (coord.layer, coord.row, coord.col);
    let plus = extended::objective(net, x, d, at, eps);
    let minus = extended::objective(net, x, d, at, -eps);
    ((plus - minus) / extended::Dd::from(2.0 * eps)).to_f64()
}

fn check_coord(net: &Network, coord: ParamCoord) -> Result<()> {
    let layer = net
        .layers()
        .get(coord.layer)
        .ok_or_else(|| Error::InvalidConfig(format!("no layer {}", coord.layer)))?;
    let (rows, cols) = layer.weights().shape();
    if coord.row >= rows || coord.col >= cols {
        return Err(Error::InvalidConfig(format!(
            "parameter ({}, {}) outside {rows}x{cols} weights of layer {}",
            coord.row, coord.col, coord.layer
        )));
    }
    Ok(())
}

/// `(J(w + eps) − J(w − eps)) / (2 eps)` for the single weight at `coord`.
pub fn numeric_grad(net: &Network, x: &[f64], d: &[f64], coord: ParamCoord, eps: f64) -> Result<f64> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    check_coord(net, coord)?;
    if x.len() != net.input_dim() {
        return Err(Error::mismatch("numeric_grad input", net.input_dim(), x.len()));
    }
    if d.len() != net.output_dim() {
        return Err(Error::mismatch("numeric_grad target", net.output_dim(), d.len()));
    }
    Ok(central_difference(net, x, d, coord, eps))
}

/// `count` inputs uniform on `(−1, 1)^input_dim` with independent ±1 targets.
pub fn random_samples(rng: &mut RngState, count: usize, input_dim: usize, output_dim: usize) -> Result<Dataset> {
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        inputs.push((0..input_dim).map(|_| 2.0 * rng.uniform() - 1.0).collect());
        targets.push(
            (0..output_dim)
                .map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 })
                .collect(),
        );
    }
    Dataset::new(inputs, targets)
}

/// Compares [`Network::backward`] with central differences for every weight
/// on every sample.
pub fn check_network(net: &Network, samples: &Dataset, eps: f64, tol: f64) -> Result<GradCheckReport> {
    check_with(net, samples, eps, tol, |net, x, d| {
        let acts = net.forward(x)?;
        net.backward(&acts, d)
    })
}

/// Like [`check_network`] but with a caller-supplied analytic gradient.
pub fn check_with<F>(net: &Network, samples: &Dataset, eps: f64, tol: f64, analytic: F) -> Result<GradCheckReport>
where
    F: Fn(&Network, &[f64], &[f64]) -> Result<Vec<Matrix>>,
{
    if samples.is_empty() {
        return Err(Error::InvalidConfig("gradient check needs at least one sample".into()));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }

    if samples.input_dim() != net.input_dim() || samples.target_dim() != net.output_dim() {
        return Err(Error::InvalidConfig(format!(
            "samples are {} -> {}, network is {} -> {}",
            samples.input_dim(),
            samples.target_dim(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let mut entries = Vec::with_capacity(samples.len() * net.num_params());
    for (sample, (x, d)) in samples.inputs().iter().zip(samples.targets()).enumerate() {
        let grads = analytic(net, x, d)?;
        if grads.len() != net.layers().len() {
            return Err(Error::mismatch("analytic gradient layers", net.layers().len(), grads.len()));
        }
        for (layer, grad) in grads.iter().enumerate() {
            let (rows, cols) = net.layers()[layer].weights().shape();
            if grad.shape() != (rows, cols) {
                return Err(Error::InvalidConfig(format!("analytic gradient of layer {layer} has wrong shape")));
            }
            for row in 0..rows {
                for col in 0..cols {
                    let coord = ParamCoord { layer, row, col };
                    let numeric = central_difference(net, x, d, coord, eps);
                    let a = grad.get(row, col);
                    entries.push(GradCheckEntry {
                        sample,
                        layer,
                        row,
                        col,
                        analytic: a,
                        numeric,
                        rel_err: relative_error(a, numeric),
                    });
                }
            }
        }
    }

    let worst = entries
        .iter()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        .cloned();
    let max_rel_err = worst.as_ref().map_or(0.0, |w| w.rel_err);
    Ok(GradCheckReport {
        eps,
        tol,
        params: net.num_params(),
        samples: samples.len(),
        max_rel_err,
        worst,
        pass: max_rel_err < tol,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Layer, ProductLayer};
    use crate::network::{LayerSpec, NetworkSpec};

    fn random_samples(rng: &mut RngState, n: usize, input_dim: usize) -> Dataset {
        super::random_samples(rng, n, input_dim, 1).unwrap()
    }

    #[test]
    fn single_weight_closed_form() {
        // y = σ(w)·(h − 1) + 1, J = −½(d − y)², dJ/dw = (d − y)(h − 1)σ'(w).
        let w = 0.3;
        let net = Network::from_layers(
            1,
            vec![Layer::Product(ProductLayer::new(Matrix::from_vec(1, 1, vec![w]).unwrap()).unwrap())],
        )
        .unwrap();
        let (h, d) = (-0.4, 1.0);
        let s = crate::numerics::logistic(w);
        let y = 1.0 - s * (1.0 - h);
        let closed = (d - y) * (h - 1.0) * s * (1.0 - s);
        let coord = ParamCoord { layer: 0, row: 0, col: 0 };
        let numeric = numeric_grad(&net, &[h], &[d], coord, 1e-5).unwrap();
        assert!((numeric - closed).abs() < 1e-9, "{numeric} vs {closed}");
    }

    #[test]
    fn numeric_grad_zero_when_target_met() {
        let spec = NetworkSpec::new(2, vec![LayerSpec::tanh(3), LayerSpec::product(1)], 1.0);
        let net = Network::init(&spec, &mut RngState::new(4)).unwrap();
        let x = [0.1, -0.6];
        let y = net.output(&x).unwrap();
        for col in 0..3 {
            let g = numeric_grad(&net, &x, &y, ParamCoord { layer: 0, row: 1, col }, 1e-5).unwrap();
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_grad_rejects_bad_input() {
        let spec = NetworkSpec::new(2, vec![LayerSpec::product(1)], 1.0);
        let net = Network::init(&spec, &mut RngState::new(4)).unwrap();
        let c = ParamCoord { layer: 0, row: 0, col: 5 };
        assert!(numeric_grad(&net, &[0.0, 0.0], &[1.0], c, 1e-5).is_err());
        let c = ParamCoord { layer: 0, row: 0, col: 0 };
        assert!(numeric_grad(&net, &[0.0, 0.0], &[1.0], c, 0.0).is_err());
    }

    #[test]
    fn zero_gradient_configuration_passes() {
        // Saturated hand-set XOR net (tanh ≈ identity on ±1, σ(w) = 1 on the
        // product neuron) with targets set to its own outputs.
        let mut hidden = Matrix::zeros(2, 3);
        hidden.set(0, 0, 1000.0);
        hidden.set(1, 1, 1000.0);
        let net = Network::from_layers(
            2,
            vec![
                Layer::TanhSum(crate::layers::TanhSumLayer::new(hidden).unwrap()),
                Layer::Product(ProductLayer::new(Matrix::from_vec(1, 2, vec![40.0, 40.0]).unwrap()).unwrap()),
            ],
        )
        .unwrap();
        let xor = crate::experiments::make_xor();
        let targets = xor.inputs().iter().map(|x| net.output(x).unwrap()).collect();
        let data = Dataset::new(xor.inputs().to_vec(), targets).unwrap();
        let report = check_network(&net, &data, DEFAULT_EPS, DEFAULT_TOL).unwrap();
        assert!(report.pass, "worst {:?}", report.worst);
        assert!(report.max_rel_err < 1e-6 * DEFAULT_TOL);
        assert_eq!(report.entries.len(), 4 * net.num_params());
    }

    #[test]
    fn empty_samples_rejected() {
        let spec = NetworkSpec::new(2, vec![LayerSpec::product(1)], 1.0);
        let net = Network::init(&spec, &mut RngState::new(1)).unwrap();
        let empty = Dataset::new(vec![], vec![]).unwrap();
        assert!(check_network(&net, &empty, DEFAULT_EPS, DEFAULT_TOL).is_err());
    }

    #[test]
    fn spiral_architecture_passes() {
        let spec = NetworkSpec::new(
            2,
            vec![LayerSpec::tanh(10), LayerSpec::product(80), LayerSpec::tanh(5), LayerSpec::product(1)],
            0.5,
        );
        let mut rng = RngState::new(2024);
        let net = Network::init(&spec, &mut rng).unwrap();
        let samples = random_samples(&mut rng, 10, 2);
        let report = check_network(&net, &samples, DEFAULT_EPS, DEFAULT_TOL).unwrap();
        assert!(report.pass, "worst {:?}", report.worst);
    }

    // Negative controls: corrupting any single sign or factor of the
    // backward rules must be caught.
    #[derive(Clone, Copy, Debug)]
    enum Mutation {
        None,
        FlipOutputSign,
        DropSigmoidSlope,
        FlipHiddenDelta,
        DropTanhSlope,
        DropPartialProduct,
    }

    fn mutated_backward(net: &Network, x: &[f64], d: &[f64], m: Mutation) -> Result<Vec<Matrix>> {
        let acts = net.forward(x)?;
        let (Layer::TanhSum(hidden), Layer::Product(out)) = (&net.layers()[0], &net.layers()[1]) else {
            unreachable!()
        };
        let h = &acts[0].output;
        let y = &acts[1].output;
        let sig = out.mixing();
        let mut g_out = Matrix::zeros(out.out_dim(), out.in_dim());
        let mut delta_h = vec![0.0; out.in_dim()];
        for i in 0..out.out_dim() {
            let mut err = d[i] - y[i];
            if matches!(m, Mutation::FlipOutputSign) {
                err = -err;
            }
            for j in 0..out.in_dim() {
                let s = sig.get(i, j);
                let mut partial: f64 = (0..out.in_dim())
                    .filter(|&k| k != j)
                    .map(|k| 1.0 - sig.get(i, k) * (1.0 - h[k]))
                    .product();
                if matches!(m, Mutation::DropPartialProduct) {
                    partial = 1.0;
                }
                let slope = if matches!(m, Mutation::DropSigmoidSlope) { 1.0 } else { s * (1.0 - s) };
                g_out.set(i, j, err * partial * (h[j] - 1.0) * slope);
                let contrib = err * partial * s;
                delta_h[j] += if matches!(m, Mutation::FlipHiddenDelta) { -contrib } else { contrib };
            }
        }
        let n = hidden.in_dim();
        let mut g_hid = Matrix::zeros(hidden.out_dim(), n + 1);
        for i in 0..hidden.out_dim() {
            let slope = if matches!(m, Mutation::DropTanhSlope) { 1.0 } else { 1.0 - h[i] * h[i] };
            for j in 0..=n {
                let xj = if j == n { 1.0 } else { x[j] };
                g_hid.set(i, j, delta_h[i] * slope * xj);
            }
        }
        Ok(vec![g_hid, g_out])
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let spec = NetworkSpec::new(3, vec![LayerSpec::tanh(4), LayerSpec::product(2)], 1.0);
        let mut rng = RngState::new(55);
        let net = Network::init(&spec, &mut rng).unwrap();
        let inputs = (0..4).map(|_| (0..3).map(|_| 2.0 * rng.uniform() - 1.0).collect()).collect();
        let targets = (0..4).map(|_| vec![1.0, -1.0]).collect();
        let samples = Dataset::new(inputs, targets).unwrap();
        for m in [
            Mutation::FlipOutputSign,
            Mutation::DropSigmoidSlope,
            Mutation::FlipHiddenDelta,
            Mutation::DropTanhSlope,
            Mutation::DropPartialProduct,
        ] {
            let report = check_with(&net, &samples, DEFAULT_EPS, DEFAULT_TOL, |n, x, d| mutated_backward(n, x, d, m)).unwrap();
            assert!(!report.pass, "{m:?} went undetected");
        }
    }

    #[test]
    fn unmutated_harness_matches_library_backward() {
        let spec = NetworkSpec::new(3, vec![LayerSpec::tanh(4), LayerSpec::product(2)], 1.0);
        let net = Network::init(&spec, &mut RngState::new(55)).unwrap();
        let x = [0.3, -0.7, 0.1];
        let d = [1.0, -1.0];
        let acts = net.forward(&x).unwrap();
        let expected = net.backward(&acts, &d).unwrap();
        let reference = mutated_backward(&net, &x, &d, Mutation::None).unwrap();
        for (e, r) in expected.iter().zip(&reference) {
            for (a, b) in e.as_slice().iter().zip(r.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
