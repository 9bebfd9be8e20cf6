//! Batch conditioning of a GP on linear-functional data.
//!
//! The posterior mean is kept in analytic form,
//! `m̃(s) = m(s) + Σ_j α_j G_j k(·, s)` with `K_GG α = y − Gm`, so that any
//! functional (including derivatives and integrals) can be applied to it
//! exactly. Two evaluation routes are provided: the Cholesky solve and the
//! representing-sequence sums `Σ_i ⟨y − Gm, y_i*⟩ C G* y_i*`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functionals::LinearFunctional;
use crate::gram::{sections, GramSystem};
use crate::kernels::{Evaluable, Kernel, MeanFunction};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct PosteriorGP {
    mean: MeanFunction,
    sys: GramSystem,
    values: DVector<f64>,
    alpha: DVector<f64>,
}

/// Conditions the GP `(k, m)` on noiseless observations `fs[i](Z) = y[i]`.
pub fn condition(k: &Kernel, m: &MeanFunction, fs: &[LinearFunctional], y: &[f64]) -> Result<PosteriorGP> {
    condition_with_noise(k, m, fs, y, &vec![0.0; fs.len()])
}

/// As [`condition`], with independent Gaussian noise of variance `noise[i]`
/// on observation `i`.
pub fn condition_with_noise(
    k: &Kernel,
    m: &MeanFunction,
    fs: &[LinearFunctional],
    y: &[f64],
    noise: &[f64],
) -> Result<PosteriorGP> {
    if y.len() != fs.len() {
        return Err(Error::DimensionMismatch {
            expected: fs.len(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed values"));
    }
    let sys = GramSystem::build_with_noise(k, m, fs, noise)?;
    PosteriorGP::from_system(m.clone(), sys, DVector::from_column_slice(y))
}

impl PosteriorGP {
    pub fn from_system(mean: MeanFunction, sys: GramSystem, values: DVector<f64>) -> Result<Self> {
        if values.len() != sys.len() {
            return Err(Error::DimensionMismatch {
                expected: sys.len(),
                got: values.len(),
            });
        }
        let residual = &values - sys.gm();
        let alpha = linalg::cholesky_solve(sys.chol(), &residual);
        Ok(Self {
            mean,
            sys,
            values,
            alpha,
        })
    }

    /// The prior with no data.
    pub fn prior(k: &Kernel, m: &MeanFunction) -> Self {
        condition(k, m, &[], &[]).expect("empty conditioning cannot fail")
    }

    pub fn kernel(&self) -> &Kernel {
        self.sys.kernel()
    }

    pub fn prior_mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn system(&self) -> &GramSystem {
        &self.sys
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `m(s) + K_sG α`.
    pub fn mean(&self, s: f64) -> f64 {
        self.mean.value(s) + sections(self.kernel(), self.sys.functionals(), s, 0).dot(&self.alpha)
    }

    /// Derivative of the posterior mean, `m'(s) + Σ_j α_j G_j ∂_t k(·, t)|_{t=s}`.
    pub fn mean_derivative(&self, s: f64) -> f64 {
        self.mean.derivative(s).unwrap_or(0.0)
            + sections(self.kernel(), self.sys.functionals(), s, 1).dot(&self.alpha)
    }

    /// `k(s1, s2) − K_{s1G} K_GG^{-1} K_{s2G}ᵀ` via two triangular solves.
    pub fn cov(&self, s1: f64, s2: f64) -> f64 {
        let k = self.kernel();
        let mut v1 = sections(k, self.sys.functionals(), s1, 0);
        linalg::forward_solve(self.sys.chol(), &mut v1);
        let prior = k.eval_unchecked(s1, s2);
        if s1 == s2 {
            return prior - v1.norm_squared();
        }
        let mut v2 = sections(k, self.sys.functionals(), s2, 0);
        linalg::forward_solve(self.sys.chol(), &mut v2);
        prior - v1.dot(&v2)
    }

    pub fn variance(&self, s: f64) -> f64 {
        self.cov(s, s)
    }

    /// Posterior standard deviation, with tiny negative variances from
    /// roundoff clamped to zero.
    pub fn sd(&self, s: f64) -> f64 {
        self.variance(s).max(0.0).sqrt()
    }

    /// Posterior covariance matrix on a set of sites.
    pub fn cov_matrix(&self, sites: &[f64]) -> DMatrix<f64> {
        let k = self.kernel();
        let n = sites.len();
        let mut v = DMatrix::zeros(self.sys.len(), n);
        for (j, &s) in sites.iter().enumerate() {
            let mut c = sections(k, self.sys.functionals(), s, 0);
            linalg::forward_solve(self.sys.chol(), &mut c);
            v.set_column(j, &c);
        }
        let reduction = v.transpose() * &v;
        DMatrix::from_fn(n, n, |i, j| k.eval_unchecked(sites[i], sites[j]) - reduction[(i, j)])
    }

    /// The explicit representing-sequence form of this posterior.
    pub fn representing(&self) -> Result<RepresentingForm<'_>> {
        RepresentingForm::new(self)
    }

    /// `G_i[m̃] − y_i` for every observation, applying each functional to the
    /// analytic posterior mean.
    pub fn fiber_check(&self) -> Result<DVector<f64>> {
        let m = PosteriorMean(self);
        let vals = self
            .sys
            .functionals()
            .iter()
            .zip(self.values.iter())
            .map(|(f, y)| f.apply(&m).map(|g| g - y))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// The posterior mean as an [`Evaluable`] with derivative access.
    pub fn mean_function(&self) -> PosteriorMean<'_> {
        PosteriorMean(self)
    }
}

/// Borrowed view of a posterior mean function.
pub struct PosteriorMean<'a>(&'a PosteriorGP);

impl Evaluable for PosteriorMean<'_> {
    fn value(&self, x: f64) -> f64 {
        self.0.mean(x)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        Some(self.0.mean_derivative(x))
    }
}

/// Posterior moments evaluated through a representing sequence
/// `y_i* = K_GG^{-1/2} e_i`:
///
/// `m̃(s) = m(s) + Σ_i ⟨y − Gm, y_i*⟩ (C G* y_i*)(s)`,
/// `k̃(s1, s2) = k(s1, s2) − Σ_i (C G* y_i*)(s1) (C G* y_i*)(s2)`,
///
/// where `(C G* y_i*)(s) = Σ_r y_i*[r] G_r k(·, s)`.
pub struct RepresentingForm<'a> {
    gp: &'a PosteriorGP,
    rows: DMatrix<f64>,
    coeffs: DVector<f64>,
}

impl<'a> RepresentingForm<'a> {
    fn new(gp: &'a PosteriorGP) -> Result<Self> {
        let rows = gp.sys.representing_sequence()?;
        let residual = &gp.values - gp.sys.gm();
        let coeffs = &rows * residual;
        Ok(Self { gp, rows, coeffs })
    }

    pub fn sequence(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// `[(C G* y_i*)(s)]_i`.
    fn pushed(&self, s: f64) -> DVector<f64> {
        &self.rows * sections(self.gp.kernel(), self.gp.sys.functionals(), s, 0)
    }

    pub fn mean(&self, s: f64) -> f64 {
        self.gp.mean.value(s) + self.coeffs.dot(&self.pushed(s))
    }

    pub fn cov(&self, s1: f64, s2: f64) -> f64 {
        self.gp.kernel().eval_unchecked(s1, s2) - self.pushed(s1).dot(&self.pushed(s2))
    }
}
