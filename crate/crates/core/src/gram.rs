//! Finite-dimensional covariance structure induced by a list of observation
//! functionals: the Gram matrix `K_GG`, cross-covariances `K_sG`, the
//! operator-applied prior mean `Gm`, and a Cholesky factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functionals::{apply_bilinear, LinearFunctional};
use crate::kernels::{Kernel, MeanFunction};
use crate::linalg;

/// Eigenvalue floor (relative to the largest eigenvalue) used when forming
/// `K_GG^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GramSystem {
    kernel: Kernel,
    functionals: Vec<LinearFunctional>,
    kgg: DMatrix<f64>,
    noise: DVector<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
    gm: DVector<f64>,
}

/// `Err(SingularGram)` if two functionals in `fs` coincide.
pub(crate) fn reject_duplicates(fs: &[LinearFunctional]) -> Result<()> {
    for (i, a) in fs.iter().enumerate() {
        if let Some(b) = fs[i + 1..].iter().find(|b| *b == a) {
            return Err(Error::SingularGram {
                reason: format!("functionals `{a}` and `{b}` are identical"),
            });
        }
    }
    Ok(())
}

/// `K[i][j] = G_{rows_i}[G_{cols_j}[k]]`.
pub(crate) fn cross_gram(k: &Kernel, rows: &[LinearFunctional], cols: &[LinearFunctional]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            m[(i, j)] = apply_bilinear(a, b, k)?;
        }
    }
    Ok(m)
}

/// Symmetric Gram of a functional list; only the upper triangle is computed.
pub(crate) fn gram(k: &Kernel, fs: &[LinearFunctional]) -> Result<DMatrix<f64>> {
    let p = fs.len();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = apply_bilinear(&fs[i], &fs[j], k)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub(crate) fn apply_mean(m: &MeanFunction, fs: &[LinearFunctional]) -> Result<DVector<f64>> {
    let vals = fs.iter().map(|f| f.apply(m)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

/// `[G_i k(·, s)]_i`.
pub(crate) fn sections(k: &Kernel, fs: &[LinearFunctional], s: f64, ds: u8) -> DVector<f64> {
    DVector::from_iterator(fs.len(), fs.iter().map(|f| f.section(k, s, ds)))
}

impl GramSystem {
    /// Noiseless Gram system.
    pub fn build(k: &Kernel, m: &MeanFunction, fs: &[LinearFunctional]) -> Result<Self> {
        Self::build_with_noise(k, m, fs, &vec![0.0; fs.len()])
    }

    /// Gram system with `noise[i]` added to the `i`-th diagonal entry.
    pub fn build_with_noise(
        k: &Kernel,
        m: &MeanFunction,
        fs: &[LinearFunctional],
        noise: &[f64],
    ) -> Result<Self> {
        if noise.len() != fs.len() {
            return Err(Error::DimensionMismatch {
                expected: fs.len(),
                got: noise.len(),
            });
        }
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("noise variances must be finite and non-negative".into()));
        }
        reject_duplicates(fs)?;
        let mut kgg = gram(k, fs)?;
        let noise = DVector::from_column_slice(noise);
        for i in 0..fs.len() {
            kgg[(i, i)] += noise[i];
        }
        let (chol, jitter) = linalg::cholesky_with_ladder(&kgg).ok_or_else(|| Error::SingularGram {
            reason: format!(
                "Cholesky failed for a {}x{} Gram matrix at maximum jitter",
                fs.len(),
                fs.len()
            ),
        })?;
        let gm = apply_mean(m, fs)?;
        Ok(Self {
            kernel: *k,
            functionals: fs.to_vec(),
            kgg,
            noise,
            chol,
            jitter,
            gm,
        })
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn functionals(&self) -> &[LinearFunctional] {
        &self.functionals
    }

    /// `K_GG` including observation noise but excluding jitter.
    pub fn kgg(&self) -> &DMatrix<f64> {
        &self.kgg
    }

    /// The matrix actually factorised: `K_GG + jitter * I`.
    pub fn kgg_factored(&self) -> DMatrix<f64> {
        let mut a = self.kgg.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.jitter;
        }
        a
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `Gm`, the functionals applied to the prior mean.
    pub fn gm(&self) -> &DVector<f64> {
        &self.gm
    }

    /// `K_sG = [G_i k(·, s)]_i`.
    pub fn cross_covariance(&self, s: f64) -> Result<DVector<f64>> {
        if !s.is_finite() {
            return Err(Error::NonFinite("cross-covariance site"));
        }
        Ok(sections(&self.kernel, &self.functionals, s, 0))
    }

    /// Rows `y_i* = K_GG^{-1/2} e_i` of a representing sequence for the
    /// factorised Gram matrix.
    pub fn representing_sequence(&self) -> Result<DMatrix<f64>> {
        linalg::inverse_sqrt(&self.kgg_factored(), EIGEN_FLOOR).ok_or_else(|| Error::SingularGram {
            reason: "Gram matrix has no positive eigenvalue".into(),
        })
    }
}
