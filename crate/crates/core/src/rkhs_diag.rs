//! Truncated Mercer spectrum of the kernel integral operator under the
//! uniform measure, and a heuristic summability check for
//! `Σ λ_i^{1-θ}`.
//!
//! This is a diagnostic on a finite Nyström truncation; it cannot certify
//! anything about the infinite series.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functionals::Domain;
use crate::kernels::Kernel;

/// Eigenvalues at or below this fraction of `λ₁` are treated as unresolved.
pub const RESOLUTION: f64 = 1e-12;

/// Largest mean tail ratio `t_{i+1}/t_i` accepted as geometric decay.
pub const GEOMETRIC_RATIO: f64 = 0.9;

pub const DEFAULT_SPECTRUM_N: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct MercerSpectrum {
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    pub grid_size: usize,
    pub domain: Domain,
    pub measure: &'static str,
    /// Number of negative eigenvalues clamped to zero.
    pub clamped: usize,
}

impl MercerSpectrum {
    /// Indices whose eigenvalue exceeds `RESOLUTION · λ₁`.
    pub fn resolved(&self) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues.iter().take_while(|&&l| l > RESOLUTION * top).count()
    }
}

/// Nyström approximation of the spectrum of `f ↦ ∫ k(·, s) f(s) ds` on the
/// midpoint grid of `n` cells (uniform measure on the domain).
pub fn mercer_spectrum(k: &Kernel, domain: &Domain, n: usize) -> Result<MercerSpectrum> {
    if n < 16 {
        return Err(Error::Config(format!("spectrum needs at least 16 grid sites, got {n}")));
    }
    let h = domain.length() / n as f64;
    let sites: Vec<f64> = (0..n).map(|i| domain.lo + (i as f64 + 0.5) * h).collect();
    let nystrom = DMatrix::from_fn(n, n, |i, j| h * k.eval_unchecked(sites[i], sites[j]));
    let mut eigenvalues: Vec<f64> = nystrom.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let mut clamped = 0;
    for l in eigenvalues.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
            clamped += 1;
        }
    }
    Ok(MercerSpectrum {
        eigenvalues,
        grid_size: n,
        domain: *domain,
        measure: "uniform",
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converging,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Converging => "converging",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCheck {
    pub theta: f64,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Mean of `t_{i+1}/t_i` over the last quartile of resolved indices.
    pub tail_ratio: f64,
    pub verdict: Verdict,
}

/// Partial sums of `λ_i^{1-θ}` and a tail-ratio verdict.
pub fn power_rkhs_check(spec: &MercerSpectrum, theta: f64) -> Result<PowerCheck> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Config(format!("theta must lie in (0, 1], got {theta}")));
    }
    let exponent = 1.0 - theta;
    let terms: Vec<f64> = spec.eigenvalues.iter().map(|&l| l.powf(exponent)).collect();
    let partial_sums: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();

    let resolved = if exponent == 0.0 { terms.len() } else { spec.resolved() };
    let tail_len = resolved.div_ceil(4).max(2);
    let tail_ratio = if resolved >= 3 {
        let start = resolved.saturating_sub(tail_len);
        let ratios: Vec<f64> = (start..resolved - 1).map(|i| terms[i + 1] / terms[i]).collect();
        ratios.iter().sum::<f64>() / ratios.len() as f64
    } else {
        1.0
    };
    let verdict = if tail_ratio <= GEOMETRIC_RATIO {
        Verdict::Converging
    } else {
        Verdict::Inconclusive
    };
    Ok(PowerCheck {
        theta,
        terms,
        partial_sums,
        tail_ratio,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain {
        Domain::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn top_eigenvalues_are_stable_under_refinement() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        let a = mercer_spectrum(&k, &unit(), 16).unwrap();
        let b = mercer_spectrum(&k, &unit(), 32).unwrap();
        for i in 0..5 {
            let rel = (a.eigenvalues[i] - b.eigenvalues[i]).abs() / b.eigenvalues[i];
            assert!(rel < 0.05, "eigenvalue {i}: {rel}");
        }
    }

    #[test]
    fn trace_identity_and_ordering() {
        let k = Kernel::matern52(0.4, 1.7).unwrap();
        let spec = mercer_spectrum(&k, &unit(), 128).unwrap();
        let sum: f64 = spec.eigenvalues.iter().sum();
        assert!((sum - 2.0 * 1.7).abs() < 1e-10, "{sum}");
        assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(spec.eigenvalues.iter().all(|&l| l >= 0.0));
        assert_eq!(spec.measure, "uniform");
    }

    #[test]
    fn theta_one_is_inconclusive() {
        let k = Kernel::squared_exponential(0.4, 1.0).unwrap();
        let spec = mercer_spectrum(&k, &unit(), 64).unwrap();
        let check = power_rkhs_check(&spec, 1.0).unwrap();
        assert!(check.terms.iter().all(|&t| t == 1.0));
        assert_eq!(check.verdict, Verdict::Inconclusive);
        assert_eq!(*check.partial_sums.last().unwrap(), 64.0);
    }

    #[test]
    fn squared_exponential_converges() {
        let k = Kernel::squared_exponential(0.4, 1.0).unwrap();
        let spec = mercer_spectrum(&k, &unit(), DEFAULT_SPECTRUM_N).unwrap();
        let check = power_rkhs_check(&spec, 0.5).unwrap();
        assert_eq!(check.verdict, Verdict::Converging, "tail ratio {}", check.tail_ratio);
    }

    #[test]
    fn matern_partial_sums_monotone() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        let spec = mercer_spectrum(&k, &unit(), DEFAULT_SPECTRUM_N).unwrap();
        let check = power_rkhs_check(&spec, 0.9).unwrap();
        assert!(check.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn argument_checks() {
        let k = Kernel::matern52(0.4, 1.0).unwrap();
        assert!(mercer_spectrum(&k, &unit(), 15).is_err());
        let spec = mercer_spectrum(&k, &unit(), 16).unwrap();
        assert!(power_rkhs_check(&spec, 0.0).is_err());
        assert!(power_rkhs_check(&spec, 1.5).is_err());
    }
}
