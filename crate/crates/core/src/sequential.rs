//! Sequential assimilation of observation batches.
//!
//! A [`PosteriorState`] stores the accumulated functionals together with the
//! Cholesky factor `L` of their Gram matrix. Absorbing a new batch with
//! prior Gram `B` and old/new cross-Gram `C` extends the factor blockwise:
//!
//! ```text
//! W = L⁻¹ C,   S = B − WᵀW,   L' = [[L, 0], [Wᵀ, chol(S)]]
//! ```
//!
//! `S` is the Gram of the new batch under the intermediate posterior
//! covariance, so this is the two-stage update written in factored form.
//! States are persistent: `assimilate` returns a new state and leaves the old
//! one untouched.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functionals::LinearFunctional;
use crate::gram::{apply_mean, cross_gram, gram, reject_duplicates, sections};
use crate::kernels::{Evaluable, Kernel, MeanFunction};
use crate::linalg;
use crate::posterior::condition_with_noise;

#[derive(Debug, Clone)]
pub struct PosteriorState {
    kernel: Kernel,
    mean: MeanFunction,
    functionals: Vec<LinearFunctional>,
    values: DVector<f64>,
    noise: DVector<f64>,
    gm: DVector<f64>,
    chol: DMatrix<f64>,
    /// `L⁻¹ (y − Gm)`
    whitened: DVector<f64>,
    alpha: DVector<f64>,
    batch_boundaries: Vec<usize>,
    jitters: Vec<f64>,
}

impl PosteriorState {
    /// State with no observations; its moments are the prior's.
    pub fn new(kernel: Kernel, mean: MeanFunction) -> Self {
        Self {
            kernel,
            mean,
            functionals: Vec::new(),
            values: DVector::zeros(0),
            noise: DVector::zeros(0),
            gm: DVector::zeros(0),
            chol: DMatrix::zeros(0, 0),
            whitened: DVector::zeros(0),
            alpha: DVector::zeros(0),
            batch_boundaries: Vec::new(),
            jitters: Vec::new(),
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn prior_mean(&self) -> &MeanFunction {
        &self.mean
    }

    pub fn functionals(&self) -> &[LinearFunctional] {
        &self.functionals
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// Index of the first observation of each assimilated batch.
    pub fn batch_boundaries(&self) -> &[usize] {
        &self.batch_boundaries
    }

    /// Jitter added to each batch's Schur complement.
    pub fn jitters(&self) -> &[f64] {
        &self.jitters
    }

    pub fn assimilate(&self, fs_new: &[LinearFunctional], y_new: &[f64]) -> Result<Self> {
        self.assimilate_with_noise(fs_new, y_new, &vec![0.0; fs_new.len()])
    }

    pub fn assimilate_with_noise(
        &self,
        fs_new: &[LinearFunctional],
        y_new: &[f64],
        noise_new: &[f64],
    ) -> Result<Self> {
        let q = fs_new.len();
        if y_new.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: y_new.len() });
        }
        if noise_new.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: noise_new.len() });
        }
        if y_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed values"));
        }
        if noise_new.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("noise variances must be finite and non-negative".into()));
        }
        if q == 0 {
            return Ok(self.clone());
        }
        reject_duplicates(fs_new).map_err(|e| Error::RedundantBatch { reason: e.to_string() })?;
        if let Some(dup) = fs_new.iter().find(|f| self.functionals.contains(f)) {
            return Err(Error::RedundantBatch {
                reason: format!("`{dup}` was already assimilated"),
            });
        }

        let p = self.len();
        let k = &self.kernel;
        let mut b = gram(k, fs_new)?;
        for i in 0..q {
            b[(i, i)] += noise_new[i];
        }
        let c = cross_gram(k, &self.functionals, fs_new)?;
        let w = if p > 0 {
            self.chol
                .solve_lower_triangular(&c)
                .expect("stored Cholesky factor has a non-zero diagonal")
        } else {
            DMatrix::zeros(0, q)
        };
        let mut schur = &b - w.transpose() * &w;
        schur = 0.5 * (&schur + schur.transpose());
        let (ls, jitter) = linalg::cholesky_with_ladder(&schur).ok_or_else(|| Error::RedundantBatch {
            reason: format!("conditional Gram of the {q} new observations is singular at maximum jitter"),
        })?;

        let mut chol = DMatrix::zeros(p + q, p + q);
        chol.view_mut((0, 0), (p, p)).copy_from(&self.chol);
        chol.view_mut((p, 0), (q, p)).copy_from(&w.transpose());
        chol.view_mut((p, p), (q, q)).copy_from(&ls);

        let gm_new = apply_mean(&self.mean, fs_new)?;
        let y_new = DVector::from_column_slice(y_new);
        // Innovation of the new batch against the intermediate posterior mean.
        let mut z_new = &y_new - &gm_new - w.transpose() * &self.whitened;
        linalg::forward_solve(&ls, &mut z_new);

        let mut functionals = self.functionals.clone();
        functionals.extend_from_slice(fs_new);
        let whitened = concat(&self.whitened, &z_new);
        let mut alpha = whitened.clone();
        linalg::backward_solve(&chol, &mut alpha);

        let mut batch_boundaries = self.batch_boundaries.clone();
        batch_boundaries.push(p);
        let mut jitters = self.jitters.clone();
        jitters.push(jitter);

        Ok(Self {
            kernel: self.kernel,
            mean: self.mean.clone(),
            functionals,
            values: concat(&self.values, &y_new),
            noise: concat(&self.noise, &DVector::from_column_slice(noise_new)),
            gm: concat(&self.gm, &gm_new),
            chol,
            whitened,
            alpha,
            batch_boundaries,
            jitters,
        })
    }

    /// Posterior mean at `s` given everything assimilated so far.
    pub fn mean(&self, s: f64) -> f64 {
        self.mean.value(s) + sections(&self.kernel, &self.functionals, s, 0).dot(&self.alpha)
    }

    pub fn mean_derivative(&self, s: f64) -> f64 {
        self.mean.derivative(s).unwrap_or(0.0)
            + sections(&self.kernel, &self.functionals, s, 1).dot(&self.alpha)
    }

    pub fn cov(&self, s1: f64, s2: f64) -> f64 {
        let mut v1 = sections(&self.kernel, &self.functionals, s1, 0);
        linalg::forward_solve(&self.chol, &mut v1);
        let prior = self.kernel.eval_unchecked(s1, s2);
        if s1 == s2 {
            return prior - v1.norm_squared();
        }
        let mut v2 = sections(&self.kernel, &self.functionals, s2, 0);
        linalg::forward_solve(&self.chol, &mut v2);
        prior - v1.dot(&v2)
    }

    pub fn variance(&self, s: f64) -> f64 {
        self.cov(s, s)
    }

    pub fn sd(&self, s: f64) -> f64 {
        self.variance(s).max(0.0).sqrt()
    }

    /// `G_i[m̃] − y_i` over all assimilated observations.
    pub fn fiber_check(&self) -> Result<DVector<f64>> {
        let m = StateMean(self);
        let vals = self
            .functionals
            .iter()
            .zip(self.values.iter())
            .map(|(f, y)| f.apply(&m).map(|g| g - y))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// Largest deviation of `L Lᵀ` from the Gram of the accumulated
    /// functionals (noise and per-batch jitter included).
    pub fn factor_residual(&self) -> Result<f64> {
        let mut full = gram(&self.kernel, &self.functionals)?;
        let bounds: Vec<usize> = self
            .batch_boundaries
            .iter()
            .copied()
            .chain(std::iter::once(self.len()))
            .collect();
        for (b, jitter) in bounds.windows(2).zip(&self.jitters) {
            for i in b[0]..b[1] {
                full[(i, i)] += jitter + self.noise[i];
            }
        }
        Ok((&self.chol * self.chol.transpose() - full).amax())
    }
}

struct StateMean<'a>(&'a PosteriorState);

impl Evaluable for StateMean<'_> {
    fn value(&self, x: f64) -> f64 {
        self.0.mean(x)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        Some(self.0.mean_derivative(x))
    }
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Two-stage posterior moments written out as the fully expanded sums over
/// representing sequences of the first batch's Gram and of the second
/// batch's conditional Gram. Built only to cross-check the factored update.
///
/// With `a_i = C G₁* y_i^(1)`, `b_j = C G₂* y_j^(2)`,
/// `c_ij = ⟨C G₁* y_i^(1), G₂* y_j^(2)⟩`, `e_i = ⟨y₁ − G₁m, y_i^(1)⟩`:
///
/// ```text
/// m̃ = m + Σ_i e_i a_i + Σ_j ⟨y₂, y_j⟩ b_j − Σ_j Σ_i ⟨y₂, y_j⟩ c_ij a_i
///       − Σ_j ⟨G₂m, y_j⟩ b_j − Σ_j Σ_i c_ij e_i b_j
///       + Σ_j Σ_k ⟨G₂m, y_j⟩ c_kj a_k + Σ_j Σ_i Σ_k c_ij e_i c_kj a_k
/// k̃ = k − Σ_i a_i ⊗ a_i − Σ_j b_j ⊗ b_j
///       + Σ_j Σ_i c_ij (a_i ⊗ b_j + b_j ⊗ a_i) − Σ_j Σ_i Σ_k c_ij c_kj a_i ⊗ a_k
/// ```
#[derive(Debug, Clone)]
pub struct TwoStageExpansion {
    kernel: Kernel,
    mean: MeanFunction,
    first: Vec<LinearFunctional>,
    second: Vec<LinearFunctional>,
    /// Rows are `y_i^(1)`.
    rep1: DMatrix<f64>,
    /// Rows are `y_j^(2)`.
    rep2: DMatrix<f64>,
    /// `c[(i, j)] = c_ij`.
    c: DMatrix<f64>,
    e: DVector<f64>,
    /// `⟨y₂, y_j^(2)⟩`
    u: DVector<f64>,
    /// `⟨G₂m, y_j^(2)⟩`
    g: DVector<f64>,
}

impl TwoStageExpansion {
    pub fn new(
        k: &Kernel,
        m: &MeanFunction,
        b1: &[LinearFunctional],
        y1: &[f64],
        b2: &[LinearFunctional],
        y2: &[f64],
    ) -> Result<Self> {
        if y1.len() != b1.len() {
            return Err(Error::DimensionMismatch { expected: b1.len(), got: y1.len() });
        }
        if y2.len() != b2.len() {
            return Err(Error::DimensionMismatch { expected: b2.len(), got: y2.len() });
        }
        let singular = |what: &str| Error::SingularGram {
            reason: format!("{what} Gram has no positive eigenvalue"),
        };
        let k11 = gram(k, b1)?;
        let rep1 = linalg::inverse_sqrt(&k11, crate::gram::EIGEN_FLOOR).ok_or_else(|| singular("first-batch"))?;
        let k21 = cross_gram(k, b2, b1)?;
        // Column i is G₂ a_i.
        let g2a = &k21 * rep1.transpose();
        let k22_cond = gram(k, b2)? - &g2a * g2a.transpose();
        let rep2 = linalg::inverse_sqrt(&k22_cond, crate::gram::EIGEN_FLOOR)
            .ok_or_else(|| singular("conditional second-batch"))?;
        let c = (&rep2 * &g2a).transpose();
        let e = &rep1 * (DVector::from_column_slice(y1) - apply_mean(m, b1)?);
        let u = &rep2 * DVector::from_column_slice(y2);
        let g = &rep2 * apply_mean(m, b2)?;
        Ok(Self {
            kernel: *k,
            mean: m.clone(),
            first: b1.to_vec(),
            second: b2.to_vec(),
            rep1,
            rep2,
            c,
            e,
            u,
            g,
        })
    }

    fn a(&self, s: f64) -> DVector<f64> {
        &self.rep1 * sections(&self.kernel, &self.first, s, 0)
    }

    fn b(&self, s: f64) -> DVector<f64> {
        &self.rep2 * sections(&self.kernel, &self.second, s, 0)
    }

    pub fn mean(&self, s: f64) -> f64 {
        let (a, b) = (self.a(s), self.b(s));
        let (p1, p2) = (a.len(), b.len());
        let (c, e, u, g) = (&self.c, &self.e, &self.u, &self.g);
        let mut acc = self.mean.value(s);
        for i in 0..p1 {
            acc += e[i] * a[i];
        }
        for j in 0..p2 {
            acc += u[j] * b[j];
            acc -= g[j] * b[j];
            for i in 0..p1 {
                acc -= u[j] * c[(i, j)] * a[i];
                acc -= c[(i, j)] * e[i] * b[j];
            }
            for kk in 0..p1 {
                acc += g[j] * c[(kk, j)] * a[kk];
            }
            for i in 0..p1 {
                for kk in 0..p1 {
                    acc += c[(i, j)] * e[i] * c[(kk, j)] * a[kk];
                }
            }
        }
        acc
    }

    pub fn cov(&self, s1: f64, s2: f64) -> f64 {
        let (a1, b1) = (self.a(s1), self.b(s1));
        let (a2, b2) = (self.a(s2), self.b(s2));
        let (p1, p2) = (a1.len(), b1.len());
        let c = &self.c;
        let mut acc = self.kernel.eval_unchecked(s1, s2);
        for i in 0..p1 {
            acc -= a1[i] * a2[i];
        }
        for j in 0..p2 {
            acc -= b1[j] * b2[j];
            for i in 0..p1 {
                acc += c[(i, j)] * (a1[i] * b2[j] + b1[j] * a2[i]);
            }
            for i in 0..p1 {
                for kk in 0..p1 {
                    acc -= c[(i, j)] * c[(kk, j)] * a1[i] * a2[kk];
                }
            }
        }
        acc
    }
}

/// A batch of observations for scheduling and timing.
#[derive(Debug, Clone)]
pub struct Batch {
    pub functionals: Vec<LinearFunctional>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimingRow {
    pub step: usize,
    pub batch_size: usize,
    pub total_observations: usize,
    pub incremental_secs: f64,
    pub full_secs: f64,
}

/// Wall-clock cost of absorbing each batch incrementally versus
/// re-conditioning on everything seen so far.
pub fn timing_report(k: &Kernel, m: &MeanFunction, batches: &[Batch]) -> Result<Vec<TimingRow>> {
    let mut state = PosteriorState::new(*k, m.clone());
    let mut all_fs = Vec::new();
    let mut all_y = Vec::new();
    let mut rows = Vec::with_capacity(batches.len());
    for (step, batch) in batches.iter().enumerate() {
        let t0 = Instant::now();
        state = state.assimilate(&batch.functionals, &batch.values)?;
        let incremental_secs = t0.elapsed().as_secs_f64();

        all_fs.extend_from_slice(&batch.functionals);
        all_y.extend_from_slice(&batch.values);
        let t1 = Instant::now();
        let full = condition_with_noise(k, m, &all_fs, &all_y, &vec![0.0; all_fs.len()])?;
        let full_secs = t1.elapsed().as_secs_f64();
        debug_assert_eq!(full.system().len(), state.len());

        rows.push(TimingRow {
            step,
            batch_size: batch.functionals.len(),
            total_observations: all_fs.len(),
            incremental_secs,
            full_secs,
        });
    }
    Ok(rows)
}
