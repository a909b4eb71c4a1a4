//! Double-double forward pass used by the finite-difference oracle.
//!
//! Central differences in plain `f64` lose about `1e-16 · |J| / eps` to
//! rounding, which is larger than many of the gradients a product network
//! produces. Evaluating the forward pass with ~32 significant digits leaves
//! only the truncation error of the difference quotient itself.
//!
//! This is a second, independent implementation of the tanh and product
//! layers; it shares no arithmetic with `layers`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::layers::Layer;
use crate::network::Network;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn from_parts(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd {
                hi: f64::INFINITY,
                lo: 0.0,
            };
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        // exp(x) = 2^k · exp(r)^(2^10), |r| <= ln2 / 2^11.
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).ldexp(-10);
        let mut term = r;
        let mut sum = Dd::ONE + r;
        for n in 2..=12 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    pub fn tanh(self) -> Dd {
        let a = self.hi.abs();
        if a > 40.0 {
            // 1 − tanh(a) < 1e-34.
            return if self.hi > 0.0 { Dd::ONE } else { -Dd::ONE };
        }
        let sign = if self.hi < 0.0 { -1.0 } else { 1.0 };
        let x = if self.hi < 0.0 { -self } else { self };
        if a < 0.5 {
            // (e^{2x} − 1) / (e^{2x} + 1) cancels badly near 0; use the odd
            // Taylor series tanh x = x − x³/3 + 2x⁵/15 − ... via sinh/cosh.
            let x2 = x * x;
            let mut sinh = x;
            let mut cosh = Dd::ONE;
            let mut term_s = x;
            let mut term_c = Dd::ONE;
            for n in 1..=30 {
                let k = 2.0 * n as f64;
                term_c = term_c * x2 / Dd::from((k - 1.0) * k);
                term_s = term_s * x2 / Dd::from(k * (k + 1.0));
                cosh = cosh + term_c;
                sinh = sinh + term_s;
                if term_s.hi.abs() < 1e-34 * sinh.hi.abs() && term_c.hi < 1e-34 {
                    break;
                }
            }
            return (sinh / cosh) * Dd::from(sign);
        }
        let e = (x + x).exp();
        (Dd::ONE - Dd::from(2.0) / (e + Dd::ONE)) * Dd::from(sign)
    }

    pub fn logistic(self) -> Dd {
        if self.hi >= 0.0 {
            Dd::ONE / (Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Dd::ONE + e)
        }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::from_parts(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        Dd::from_parts(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + Dd::from(q3)
    }
}

/// Single-layer forward pass in double-double; weights may be overridden
/// by `perturb = Some((row, col, delta))`.
pub fn layer_forward(layer: &Layer, input: &[Dd], perturb: Option<(usize, usize, Dd)>) -> Vec<Dd> {
    let w = layer.weights();
    let weight = |r: usize, c: usize| -> Dd {
        let base = Dd::from(w.get(r, c));
        match perturb {
            Some((pr, pc, delta)) if pr == r && pc == c => base + delta,
            _ => base,
        }
    };
    match layer {
        Layer::TanhSum(l) => {
            let n = l.in_dim();
            (0..l.out_dim())
                .map(|i| {
                    let mut z = weight(i, n);
                    for (j, &x) in input.iter().enumerate() {
                        z = z + weight(i, j) * x;
                    }
                    z.tanh()
                })
                .collect()
        }
        Layer::Product(l) => (0..l.out_dim())
            .map(|i| {
                let mut y = Dd::ONE;
                for (j, &h) in input.iter().enumerate() {
                    let d = weight(i, j).logistic();
                    y = y * (Dd::ONE - d * (Dd::ONE - h));
                }
                y
            })
            .collect(),
    }
}

/// `J = −½ Σ (d − y)²` with the weight at `(layer, row, col)` shifted by `delta`.
pub fn objective(net: &Network, x: &[f64], d: &[f64], coord: (usize, usize, usize), delta: f64) -> Dd {
    let (layer_idx, row, col) = coord;
    let mut current: Vec<Dd> = x.iter().map(|&v| Dd::from(v)).collect();
    for (idx, layer) in net.layers().iter().enumerate() {
        let perturb = (idx == layer_idx).then_some((row, col, Dd::from(delta)));
        current = layer_forward(layer, &current, perturb);
    }
    let mut sum = Dd::ZERO;
    for (&y, &t) in current.iter().zip(d) {
        let e = Dd::from(t) - y;
        sum = sum + e * e;
    }
    -(sum * Dd::from(0.5))
}
