//! Small dense linear-algebra helpers shared by the conditioning backends.

use nalgebra::{DMatrix, DVector};

/// Relative jitter levels tried after a plain factorisation fails, as a
/// multiple of `trace / p`.
pub const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower Cholesky factor of `a + jitter * I`, escalating `jitter` along
/// [`JITTER_LADDER`]. Returns the factor and the absolute jitter applied, or
/// `None` when even the largest level fails.
pub fn cholesky_with_ladder(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let p = a.nrows();
    if p == 0 {
        return Some((DMatrix::zeros(0, 0), 0.0));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(l) = a.clone().cholesky() {
        return Some((l.unpack(), 0.0));
    }
    let scale = a.trace() / p as f64;
    if scale.is_nan() || scale <= 0.0 {
        return None;
    }
    JITTER_LADDER.iter().find_map(|rel| {
        let jitter = rel * scale;
        let mut shifted = a.clone();
        for i in 0..p {
            shifted[(i, i)] += jitter;
        }
        shifted.cholesky().map(|l| (l.unpack(), jitter))
    })
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_solve(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    if l.nrows() > 0 {
        let ok = l.solve_lower_triangular_mut(b);
        debug_assert!(ok);
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub fn backward_solve(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    if l.nrows() > 0 {
        let ok = l.tr_solve_lower_triangular_mut(b);
        debug_assert!(ok);
    }
}

/// `(L Lᵀ)^{-1} b`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    forward_solve(l, &mut x);
    backward_solve(l, &mut x);
    x
}

/// Symmetric inverse square root through an eigendecomposition, flooring
/// eigenvalues at `floor_rel * λ_max`. `None` if the matrix has no positive
/// eigenvalue.
pub fn inverse_sqrt(a: &DMatrix<f64>, floor_rel: f64) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    if p == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let sym = 0.5 * (a + a.transpose());
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    if !lmax.is_finite() || lmax <= 0.0 {
        return None;
    }
    let floor = floor_rel * lmax;
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose())
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    (0.5 * (a + a.transpose())).symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_plain_success() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let (l, j) = cholesky_with_ladder(&a).unwrap();
        assert_eq!(j, 0.0);
        assert!((&l * l.transpose() - a).abs().max() < 1e-14);
    }

    #[test]
    fn ladder_rescues_slightly_indefinite() {
        // Rank-one matrix nudged negative by roundoff-sized noise.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-15]);
        let (l, j) = cholesky_with_ladder(&a).unwrap();
        assert!(j > 0.0 && j <= 1e-6);
        let mut shifted = a.clone();
        shifted[(0, 0)] += j;
        shifted[(1, 1)] += j;
        assert!((&l * l.transpose() - shifted).abs().max() < 1e-12);
    }

    #[test]
    fn ladder_gives_up_on_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_with_ladder(&a).is_none());
    }

    #[test]
    fn inverse_sqrt_scalar_and_identity() {
        let a = DMatrix::from_element(1, 1, 4.0);
        assert!((inverse_sqrt(&a, 1e-12).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        let i = DMatrix::<f64>::identity(5, 5);
        assert!((inverse_sqrt(&i, 1e-12).unwrap() - &i).abs().max() < 1e-14);
    }
}
