//! Bounded linear observation functionals and their action on functions and
//! on covariance kernels.
//!
//! Every functional is stored as a finite list of weighted evaluation atoms
//! `(x, w, d)` meaning `f ↦ Σ w · f^{(d)}(x)`. Point and derivative
//! evaluations are a single atom; integral functionals expand into their
//! Gauss–Legendre nodes with the weight density folded into the quadrature
//! weights. Applying a functional to a kernel section or applying two
//! functionals to a kernel then reduces to sums over atoms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{Evaluable, Kernel};
use crate::quadrature::QuadratureRule;

/// Default number of Gauss–Legendre nodes per integral functional.
pub const DEFAULT_QUAD_ORDER: usize = 200;

/// Closed interval `[lo, hi]` on which an experiment lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// `n` equispaced sites including both endpoints.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => vec![],
            1 => vec![self.center()],
            _ => {
                let h = self.length() / (n - 1) as f64;
                (0..n)
                    .map(|i| if i == n - 1 { self.hi } else { self.lo + h * i as f64 })
                    .collect()
            }
        }
    }
}

/// Weight density of an integral functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Constant(f64),
    /// `cos(omega * (x - center))`
    Cosine { omega: f64, center: f64 },
    /// `sin(omega * (x - center))`
    Sine { omega: f64, center: f64 },
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Weight::Constant(c) => c,
            Weight::Cosine { omega, center } => (omega * (x - center)).cos(),
            Weight::Sine { omega, center } => (omega * (x - center)).sin(),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Weight::Constant(c) => c.is_finite(),
            Weight::Cosine { omega, center } | Weight::Sine { omega, center } => {
                omega.is_finite() && center.is_finite()
            }
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "{c}"),
            Weight::Cosine { omega, center } => write!(f, "cos({omega}(x-{center}))"),
            Weight::Sine { omega, center } => write!(f, "sin({omega}(x-{center}))"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalKind {
    PointEval { site: f64 },
    DerivEval { site: f64 },
    Integral { weight: Weight, lo: f64, hi: f64 },
}

/// One term `w · f^{(order)}(x)` of a functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
    pub order: u8,
}

#[derive(Debug, Clone)]
pub struct LinearFunctional {
    kind: FunctionalKind,
    label: String,
    quad_order: usize,
    atoms: Arc<[Atom]>,
}

/// Two functionals are equal when they describe the same mathematical
/// functional; labels do not participate.
impl PartialEq for LinearFunctional {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && (!matches!(self.kind, FunctionalKind::Integral { .. })
                || self.quad_order == other.quad_order)
    }
}

impl LinearFunctional {
    pub fn point(site: f64) -> Result<Self> {
        Self::point_labeled(site, format!("point({site})"))
    }

    pub fn point_labeled(site: f64, label: impl Into<String>) -> Result<Self> {
        if !site.is_finite() {
            return Err(Error::NonFinite("point evaluation site"));
        }
        Ok(Self {
            kind: FunctionalKind::PointEval { site },
            label: label.into(),
            quad_order: 0,
            atoms: Arc::from([Atom { x: site, w: 1.0, order: 0 }]),
        })
    }

    pub fn derivative(site: f64) -> Result<Self> {
        Self::derivative_labeled(site, format!("deriv({site})"))
    }

    pub fn derivative_labeled(site: f64, label: impl Into<String>) -> Result<Self> {
        if !site.is_finite() {
            return Err(Error::NonFinite("derivative evaluation site"));
        }
        Ok(Self {
            kind: FunctionalKind::DerivEval { site },
            label: label.into(),
            quad_order: 0,
            atoms: Arc::from([Atom { x: site, w: 1.0, order: 1 }]),
        })
    }

    /// `f ↦ ∫_lo^hi weight(x) f(x) dx` discretised with `quad_order` Gauss–Legendre nodes.
    pub fn integral(weight: Weight, lo: f64, hi: f64, quad_order: usize) -> Result<Self> {
        Self::integral_labeled(weight, lo, hi, quad_order, format!("integral[{weight}; {lo}, {hi}]"))
    }

    pub fn integral_labeled(
        weight: Weight,
        lo: f64,
        hi: f64,
        quad_order: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !weight.is_finite() {
            return Err(Error::NonFinite("integral weight parameters"));
        }
        let rule = QuadratureRule::gauss_legendre(quad_order, lo, hi)?;
        let atoms: Vec<Atom> = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(&x, &q)| Atom { x, w: q * weight.eval(x), order: 0 })
            .collect();
        Ok(Self {
            kind: FunctionalKind::Integral { weight, lo, hi },
            label: label.into(),
            quad_order,
            atoms: atoms.into(),
        })
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Quadrature order for integral functionals, 0 otherwise.
    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    /// Same functional discretised with a different quadrature order.
    pub fn with_quad_order(&self, order: usize) -> Result<Self> {
        match self.kind {
            FunctionalKind::Integral { weight, lo, hi } => {
                Self::integral_labeled(weight, lo, hi, order, self.label.clone())
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn needs_derivative(&self) -> bool {
        matches!(self.kind, FunctionalKind::DerivEval { .. })
    }

    pub fn check_domain(&self, domain: &Domain) -> Result<()> {
        let ok = match self.kind {
            FunctionalKind::PointEval { site } | FunctionalKind::DerivEval { site } => {
                domain.contains(site)
            }
            FunctionalKind::Integral { lo, hi, .. } => domain.contains(lo) && domain.contains(hi),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidFunctional(format!(
                "`{}` reaches outside the domain [{}, {}]",
                self.label, domain.lo, domain.hi
            )))
        }
    }

    /// `G(g)`.
    pub fn apply(&self, g: &dyn Evaluable) -> Result<f64> {
        let mut acc = 0.0;
        for a in self.atoms.iter() {
            let v = if a.order == 0 {
                g.value(a.x)
            } else {
                g.derivative(a.x)
                    .ok_or_else(|| Error::MissingDerivative(self.label.clone()))?
            };
            acc += a.w * v;
        }
        Ok(acc)
    }

    /// `G[k(·, s)]`, the functional acting on the first kernel argument.
    pub fn apply_to_kernel_section(&self, k: &Kernel, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::NonFinite("kernel section site"));
        }
        Ok(self.section(k, s, 0))
    }

    /// `G[∂_t^{ds} k(·, t)]|_{t=s}`; the derivative of the kernel section with
    /// respect to its free argument when `ds == 1`.
    pub(crate) fn section(&self, k: &Kernel, s: f64, ds: u8) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.w * k.deriv_unchecked(a.x, s, a.order, ds))
            .sum()
    }
}

impl fmt::Display for LinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// `G₁[G₂[k]]` with `f1` acting on the first kernel argument and `f2` on the second.
pub fn apply_bilinear(f1: &LinearFunctional, f2: &LinearFunctional, k: &Kernel) -> Result<f64> {
    let mut acc = 0.0;
    for a in f1.atoms() {
        let mut inner = 0.0;
        for b in f2.atoms() {
            inner += b.w * k.deriv_unchecked(a.x, b.x, a.order, b.order);
        }
        acc += a.w * inner;
    }
    Ok(acc)
}

/// Real trigonometric coefficient functionals on a domain of half-width `L`
/// centred at `c`: `∫ f(x) cos(πj(x-c)/L) dx`, `∫ f(x) sin(πj(x-c)/L) dx`,
/// ordered cos₁, sin₁, cos₂, sin₂, … and truncated to `n` entries.
pub fn fourier_functionals(n: usize, domain: &Domain, quad_order: usize) -> Result<Vec<LinearFunctional>> {
    let half = domain.half_width();
    let center = domain.center();
    (0..n)
        .map(|i| {
            let j = i / 2 + 1;
            let omega = PI * j as f64 / half;
            let (weight, label) = if i % 2 == 0 {
                (Weight::Cosine { omega, center }, format!("fourier_cos{j}"))
            } else {
                (Weight::Sine { omega, center }, format!("fourier_sin{j}"))
            };
            LinearFunctional::integral_labeled(weight, domain.lo, domain.hi, quad_order, label)
        })
        .collect()
}
