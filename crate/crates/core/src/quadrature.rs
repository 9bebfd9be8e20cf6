//! Gauss–Legendre quadrature on arbitrary intervals.

use crate::error::{Error, Result};

/// Nodes and weights of an `order`-point Gauss–Legendre rule mapped to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Builds the rule and checks it integrates monomials of degree 0..=5
    /// (centred on the interval midpoint) to within 1e-12.
    pub fn gauss_legendre(order: usize, lo: f64, hi: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidFunctional("quadrature order must be at least 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidFunctional(format!(
                "quadrature interval [{lo}, {hi}] is empty or non-finite"
            )));
        }
        let (x, w) = legendre_nodes(order);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let rule = Self {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|v| half * v).collect(),
            order,
        };
        rule.verify(lo, hi)?;
        Ok(rule)
    }

    fn verify(&self, lo: f64, hi: f64) -> Result<()> {
        let mid = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        let max_degree = (2 * self.order - 1).min(5);
        for deg in 0..=max_degree as i32 {
            // Integral of (x - mid)^deg over [mid - half, mid + half].
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 * half.powi(deg + 1) / (deg + 1) as f64
            };
            let approx: f64 = self.integrate(|x| (x - mid).powi(deg));
            let scale = (2.0 * half.powi(deg + 1)).max(1.0);
            if (approx - exact).abs() > 1e-12 * scale {
                return Err(Error::InvalidFunctional(format!(
                    "Gauss-Legendre rule of order {} fails degree-{deg} exactness ({approx} vs {exact})",
                    self.order
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1] by Newton iteration
/// on the three-term recurrence.
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        // Roots come out descending from +1.
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = weight;
        w[i] = weight;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}
