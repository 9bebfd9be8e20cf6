//! Stationary covariance kernels on the real line and prior mean functions.
//!
//! Kernels expose closed-form mixed partial derivatives up to order (1, 1),
//! which is what derivative observations require in both the Gram matrix and
//! the cross-covariance vectors.

use crate::error::{Error, Result};

/// Kernel families with analytic first-order mixed derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Matern52 => "matern52",
            KernelFamily::SquaredExponential => "squared_exponential",
        }
    }
}

/// A stationary covariance function `k(s, t) = variance * rho(|s - t| / lengthscale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    lengthscale: f64,
    variance: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, lengthscale: f64, variance: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self {
            family,
            lengthscale,
            variance,
        })
    }

    pub fn matern52(lengthscale: f64, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, lengthscale, variance)
    }

    pub fn squared_exponential(lengthscale: f64, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale, variance)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `k(s, t)`. Rejects NaN/infinite arguments.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        check_finite(s, t)?;
        Ok(self.eval_unchecked(s, t))
    }

    /// `k(s, t)` without input validation; used in inner loops where the
    /// arguments are quadrature nodes or validated sites.
    #[inline]
    pub fn eval_unchecked(&self, s: f64, t: f64) -> f64 {
        self.deriv_unchecked(s, t, 0, 0)
    }

    /// `d^{d1}/ds^{d1} d^{d2}/dt^{d2} k(s, t)` for `d1, d2` in `{0, 1}`.
    pub fn deriv(&self, s: f64, t: f64, d1: u8, d2: u8) -> Result<f64> {
        check_finite(s, t)?;
        if d1 > 1 || d2 > 1 {
            return Err(Error::UnsupportedDerivative {
                family: self.family.name(),
                d1,
                d2,
            });
        }
        Ok(self.deriv_unchecked(s, t, d1, d2))
    }

    /// Closed-form mixed partials. Orders above one are a caller bug.
    #[inline]
    pub fn deriv_unchecked(&self, s: f64, t: f64, d1: u8, d2: u8) -> f64 {
        debug_assert!(d1 <= 1 && d2 <= 1);
        let d = s - t;
        let l = self.lengthscale;
        let v = self.variance;
        match self.family {
            KernelFamily::Matern52 => {
                // a = sqrt(5) / l, r = |s - t|
                let a = 5f64.sqrt() / l;
                let r = d.abs();
                let e = (-a * r).exp();
                match (d1, d2) {
                    (0, 0) => v * (1.0 + a * r + a * a * r * r / 3.0) * e,
                    (1, 0) => -v * a * a / 3.0 * d * (1.0 + a * r) * e,
                    (0, 1) => v * a * a / 3.0 * d * (1.0 + a * r) * e,
                    _ => v * a * a / 3.0 * (1.0 + a * r - a * a * r * r) * e,
                }
            }
            KernelFamily::SquaredExponential => {
                let l2 = l * l;
                let base = v * (-0.5 * d * d / l2).exp();
                match (d1, d2) {
                    (0, 0) => base,
                    (1, 0) => -d / l2 * base,
                    (0, 1) => d / l2 * base,
                    _ => (1.0 / l2 - d * d / (l2 * l2)) * base,
                }
            }
        }
    }
}

fn check_finite(s: f64, t: f64) -> Result<()> {
    if s.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("kernel arguments"))
    }
}

/// A univariate function that can be observed through linear functionals.
pub trait Evaluable {
    fn value(&self, x: f64) -> f64;

    /// First derivative, if the function exposes one.
    fn derivative(&self, _x: f64) -> Option<f64> {
        None
    }
}

/// Adapter turning closures into [`Evaluable`]s.
pub struct FnEval<F, D = fn(f64) -> f64> {
    f: F,
    df: Option<D>,
}

impl<F: Fn(f64) -> f64> FnEval<F> {
    pub fn new(f: F) -> Self {
        Self { f, df: None }
    }
}

impl<F: Fn(f64) -> f64, D: Fn(f64) -> f64> FnEval<F, D> {
    pub fn with_derivative(f: F, df: D) -> Self {
        Self { f, df: Some(df) }
    }
}

impl<F: Fn(f64) -> f64, D: Fn(f64) -> f64> Evaluable for FnEval<F, D> {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        self.df.as_ref().map(|d| d(x))
    }
}

/// Prior mean function.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFunction {
    Zero,
    Constant(f64),
    /// Natural cubic spline through tabulated values. Constant extrapolation
    /// of the end values outside the table.
    Tabulated(CubicSpline),
}

impl MeanFunction {
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        CubicSpline::natural(xs, ys).map(MeanFunction::Tabulated)
    }
}

impl Evaluable for MeanFunction {
    fn value(&self, x: f64) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
            MeanFunction::Tabulated(s) => s.value(x),
        }
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        Some(match self {
            MeanFunction::Zero | MeanFunction::Constant(_) => 0.0,
            MeanFunction::Tabulated(s) => s.slope(x),
        })
    }
}

/// Natural cubic spline interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: ys.len(),
            });
        }
        if n < 2 {
            return Err(Error::Config("a tabulated function needs at least two knots".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabulated values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("tabulation knots must be strictly increasing".into()));
        }

        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = xs[i + 1] - xs[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { xs, ys, m })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn slope(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_fd(k: &Kernel, s: f64, t: f64, d1: u8, d2: u8) -> f64 {
        let h = 1e-5;
        let f = |a: f64, b: f64| k.eval(a, b).unwrap();
        match (d1, d2) {
            (1, 0) => (f(s + h, t) - f(s - h, t)) / (2.0 * h),
            (0, 1) => (f(s, t + h) - f(s, t - h)) / (2.0 * h),
            _ => {
                (f(s + h, t + h) - f(s + h, t - h) - f(s - h, t + h) + f(s - h, t - h))
                    / (4.0 * h * h)
            }
        }
    }

    /// Mixed partial as a central difference in `s` of the analytic `∂_t k`.
    /// A second difference of `k` itself at h = 1e-5 carries roundoff of
    /// order eps / h² ≈ 2e-6, which is above the 1e-6 relative target.
    fn central_fd_mixed(k: &Kernel, s: f64, t: f64) -> f64 {
        let h = 1e-5;
        (k.deriv(s + h, t, 0, 1).unwrap() - k.deriv(s - h, t, 0, 1).unwrap()) / (2.0 * h)
    }

    #[test]
    fn matern_diagonal_is_variance() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        assert_eq!(k.eval(0.3, 0.3).unwrap(), 1.0);
        let k = Kernel::matern52(0.4, 2.5).unwrap();
        assert_eq!(k.eval(-0.7, -0.7).unwrap(), 2.5);
    }

    #[test]
    fn matern_symmetric_pair() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        assert_eq!(k.eval(0.0, 0.4).unwrap(), k.eval(0.4, 0.0).unwrap());
    }

    #[test]
    fn matern_closed_form_at_unit_distance() {
        // (1 + sqrt5 + 5/3) exp(-sqrt5), evaluated with mpmath
        let k = Kernel::matern52(1.0, 1.0).unwrap();
        assert_relative_eq!(
            k.eval(0.0, 1.0).unwrap(),
            0.523_994_108_831_820_3,
            max_relative = 1e-14
        );
    }

    #[test]
    fn zeroth_derivative_is_eval() {
        for k in [
            Kernel::matern52(0.4, 1.3).unwrap(),
            Kernel::squared_exponential(0.7, 0.5).unwrap(),
        ] {
            for (s, t) in [(0.1, -0.3), (0.0, 0.0), (0.9, 0.2)] {
                assert_eq!(k.deriv(s, t, 0, 0).unwrap(), k.eval(s, t).unwrap());
            }
        }
    }

    #[test]
    fn first_derivative_vanishes_on_diagonal() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        assert_eq!(k.deriv(0.25, 0.25, 1, 0).unwrap(), 0.0);
        assert_eq!(k.deriv(0.25, 0.25, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn matern_mixed_derivative_matches_finite_differences() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        let exact = k.deriv(0.1, -0.2, 1, 1).unwrap();
        let fd = central_fd(&k, 0.1, -0.2, 1, 1);
        assert!((exact - fd).abs() < 1e-6, "{exact} vs {fd}");
    }

    #[test]
    fn mixed_derivative_on_diagonal_is_five_thirds_over_l2() {
        let k = Kernel::matern52(0.4, 1.7).unwrap();
        assert_relative_eq!(
            k.deriv(0.0, 0.0, 1, 1).unwrap(),
            5.0 * 1.7 / (3.0 * 0.16),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_parameters_and_inputs() {
        assert!(Kernel::matern52(0.0, 1.0).is_err());
        assert!(Kernel::matern52(1.0, -1.0).is_err());
        assert!(Kernel::squared_exponential(f64::NAN, 1.0).is_err());
        let k = Kernel::matern52(1.0, 1.0).unwrap();
        assert_eq!(k.eval(f64::NAN, 0.0), Err(Error::NonFinite("kernel arguments")));
        assert!(matches!(
            k.deriv(0.0, 0.0, 2, 0),
            Err(Error::UnsupportedDerivative { d1: 2, .. })
        ));
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [
            Kernel::matern52(0.4, 1.0).unwrap(),
            Kernel::squared_exponential(0.3, 2.0).unwrap(),
        ] {
            for _ in 0..1000 {
                let s = rng.random_range(-1.0..1.0);
                let t = rng.random_range(-1.0..1.0);
                assert!((k.eval(s, t).unwrap() - k.eval(t, s).unwrap()).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in [
            Kernel::matern52(0.4, 1.0).unwrap(),
            Kernel::squared_exponential(0.4, 1.0).unwrap(),
        ] {
            let mut checked = 0;
            while checked < 1000 {
                let s: f64 = rng.random_range(-1.0..1.0);
                let t: f64 = rng.random_range(-1.0..1.0);
                for (d1, d2) in [(1, 0), (0, 1), (1, 1)] {
                    let exact = k.deriv(s, t, d1, d2).unwrap();
                    let fd = if (d1, d2) == (1, 1) {
                        central_fd_mixed(&k, s, t)
                    } else {
                        central_fd(&k, s, t, d1, d2)
                    };
                    // Skip values where FD cancellation dominates the comparison.
                    if exact.abs() < 1e-2 {
                        continue;
                    }
                    assert!(
                        ((exact - fd) / exact).abs() < 1e-6,
                        "{:?} ({s},{t}) order ({d1},{d2}): {exact} vs {fd}",
                        k.family()
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn gram_on_random_points_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [
            Kernel::matern52(0.4, 1.0).unwrap(),
            Kernel::squared_exponential(0.4, 1.0).unwrap(),
        ] {
            let pts: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = DMatrix::from_fn(20, 20, |i, j| k.eval(pts[i], pts[j]).unwrap());
            let min = g.symmetric_eigenvalues().min();
            assert!(min >= -1e-10, "min eigenvalue {min}");
            for (s, t) in [(pts[0], pts[1]), (pts[2], pts[3])] {
                let (a, b, c) = (k.eval(s, s).unwrap(), k.eval(s, t).unwrap(), k.eval(t, t).unwrap());
                assert!(a * c - b * b >= -1e-12);
            }
        }
    }

    #[test]
    fn spline_interpolates_and_slope_matches_fd() {
        let xs: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        let m = MeanFunction::tabulated(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((m.value(*x) - y).abs() < 1e-14);
        }
        let h = 1e-6;
        for x in [-0.93, -0.35, 0.05, 0.51, 0.87] {
            let fd = (m.value(x + h) - m.value(x - h)) / (2.0 * h);
            assert!((m.derivative(x).unwrap() - fd).abs() < 1e-7);
        }
        // Natural spline of sin(2x) should track it closely inside the table.
        assert!((m.value(0.1) - 0.2f64.sin()).abs() < 1e-3);
    }

    #[test]
    fn spline_rejects_bad_tables() {
        assert!(MeanFunction::tabulated(vec![0.0], vec![1.0]).is_err());
        assert!(MeanFunction::tabulated(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MeanFunction::tabulated(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn two_knot_spline_is_linear() {
        let m = MeanFunction::tabulated(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap();
        assert_eq!(m.value(1.0), 3.0);
        assert_eq!(m.derivative(0.5), Some(2.0));
    }
}
