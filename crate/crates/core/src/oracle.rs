//! Grid-discretised Gaussian measure used as an independent conditioning
//! backend.
//!
//! The prior is replaced by the Gaussian vector of its values on a uniform
//! grid. Functionals become weight vectors on that grid: linear
//! interpolation for point evaluation, trapezoid weights for integrals and a
//! finite-difference stencil for derivatives. Conditioning is then plain
//! multivariate-normal algebra. None of this shares code with the
//! Gauss–Legendre/analytic-kernel path, so agreement between the two is a
//! meaningful check.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::functionals::{Domain, FunctionalKind, LinearFunctional};
use crate::kernels::{Evaluable, Kernel, MeanFunction};
use crate::linalg;
use crate::posterior::condition;

#[derive(Debug, Clone)]
pub struct GridMeasure {
    grid: Vec<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GridMeasure {
    pub fn new(grid: Vec<f64>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if mean.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mean.len() });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: cov.nrows() });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid sites must be strictly increasing".into()));
        }
        Ok(Self { grid, mean, cov })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn variance(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    /// `max |cov − covᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.cov - self.cov.transpose()).amax()
    }

    /// `(λ_min, λ_max)` of the covariance.
    pub fn eigen_range(&self) -> (f64, f64) {
        let ev = self.cov.clone().symmetric_eigenvalues();
        (ev.min(), ev.max())
    }
}

/// Uniform-grid discretisation of the GP `(k, m)` with `n` sites.
pub fn discretize(k: &Kernel, m: &MeanFunction, domain: &Domain, n: usize) -> Result<GridMeasure> {
    if n < 2 {
        return Err(Error::Config(format!("grid needs at least 2 sites, got {n}")));
    }
    let grid = domain.linspace(n);
    let mean = DVector::from_iterator(n, grid.iter().map(|&x| m.value(x)));
    let mut cov = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = k.eval_unchecked(grid[i], grid[j]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    GridMeasure::new(grid, mean, cov)
}

/// Weight vector `w` with `G(f) ≈ Σ w_i f(grid_i)`.
pub fn weights_for(f: &LinearFunctional, grid: &[f64]) -> Result<DVector<f64>> {
    let n = grid.len();
    if n < 2 {
        return Err(Error::Config("grid needs at least 2 sites".into()));
    }
    let (lo, hi) = (grid[0], grid[n - 1]);
    let outside = |site: f64| Error::SiteOutOfGrid { site, lo, hi };
    let mut w = DVector::zeros(n);
    match *f.kind() {
        FunctionalKind::PointEval { site } => {
            if !(site >= lo && site <= hi) {
                return Err(outside(site));
            }
            let i = bracket(grid, site);
            let t = (site - grid[i]) / (grid[i + 1] - grid[i]);
            if t == 0.0 {
                w[i] = 1.0;
            } else if t == 1.0 {
                w[i + 1] = 1.0;
            } else {
                w[i] = 1.0 - t;
                w[i + 1] = t;
            }
        }
        FunctionalKind::DerivEval { site } => {
            if !(site >= lo && site <= hi) {
                return Err(outside(site));
            }
            if n < 3 {
                return Err(Error::Config("derivative stencil needs at least 3 sites".into()));
            }
            // Stencils at the two bracketing nodes, blended linearly so that
            // off-grid sites keep second-order accuracy.
            let h = (hi - lo) / (n - 1) as f64;
            let i = bracket(grid, site);
            let t = (site - grid[i]) / (grid[i + 1] - grid[i]);
            if t < 1.0 {
                add_stencil(&mut w, i, h, 1.0 - t);
            }
            if t > 0.0 {
                add_stencil(&mut w, i + 1, h, t);
            }
        }
        FunctionalKind::Integral { weight, lo: a, hi: b } => {
            if a < lo || b > hi {
                return Err(outside(if a < lo { a } else { b }));
            }
            // Trapezoid on the piecewise-linear interpolant of weight·f,
            // clipped to [a, b].
            for i in 0..n - 1 {
                let (x0, x1) = (grid[i], grid[i + 1]);
                let u = x0.max(a);
                let v = x1.min(b);
                if v <= u {
                    continue;
                }
                let tu = (u - x0) / (x1 - x0);
                let tv = (v - x0) / (x1 - x0);
                let half = 0.5 * (v - u);
                w[i] += half * ((1.0 - tu) + (1.0 - tv)) * weight.eval(x0);
                w[i + 1] += half * (tu + tv) * weight.eval(x1);
            }
        }
    }
    Ok(w)
}

/// Adds `scale` times a first-derivative stencil centred on node `i`: fourth
/// order in the interior, second order one node from the boundary and
/// one-sided at the ends.
fn add_stencil(w: &mut DVector<f64>, i: usize, h: f64, scale: f64) {
    let n = w.len();
    let c = scale / h;
    if i >= 2 && i + 2 < n {
        w[i - 2] += c / 12.0;
        w[i - 1] -= c * 8.0 / 12.0;
        w[i + 1] += c * 8.0 / 12.0;
        w[i + 2] -= c / 12.0;
    } else if i >= 1 && i + 1 < n {
        w[i - 1] -= 0.5 * c;
        w[i + 1] += 0.5 * c;
    } else if i == 0 {
        w[0] -= 1.5 * c;
        w[1] += 2.0 * c;
        w[2] -= 0.5 * c;
    } else {
        w[n - 1] += 1.5 * c;
        w[n - 2] -= 2.0 * c;
        w[n - 3] += 0.5 * c;
    }
}

/// Largest `i` with `grid[i] <= x`, capped so that `i + 1` is valid.
fn bracket(grid: &[f64], x: f64) -> usize {
    grid.partition_point(|&g| g <= x).saturating_sub(1).min(grid.len() - 2)
}

/// Stacked weights, one row per functional.
pub fn weight_matrix(fs: &[LinearFunctional], grid: &[f64]) -> Result<DMatrix<f64>> {
    let mut w = DMatrix::zeros(fs.len(), grid.len());
    for (i, f) in fs.iter().enumerate() {
        w.set_row(i, &weights_for(f, grid)?.transpose());
    }
    Ok(w)
}

/// Conditions the grid measure on `W f = y`.
pub fn oracle_condition(gm: &GridMeasure, w: &DMatrix<f64>, y: &[f64]) -> Result<GridMeasure> {
    oracle_condition_with_noise(gm, w, y, &vec![0.0; y.len()])
}

/// Conditions on `W f + ε = y` with independent `ε_i ~ N(0, noise_i)`.
pub fn oracle_condition_with_noise(
    gm: &GridMeasure,
    w: &DMatrix<f64>,
    y: &[f64],
    noise: &[f64],
) -> Result<GridMeasure> {
    let n = gm.grid.len();
    let p = w.nrows();
    if w.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.ncols() });
    }
    if y.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: y.len() });
    }
    if noise.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: noise.len() });
    }
    if p == 0 {
        return Ok(gm.clone());
    }
    let a = &gm.cov * w.transpose();
    let mut s = w * &a;
    s = 0.5 * (&s + s.transpose());
    for (i, v) in noise.iter().enumerate() {
        s[(i, i)] += v;
    }
    let (l, _) = linalg::cholesky_with_ladder(&s).ok_or_else(|| Error::SingularGram {
        reason: "grid oracle Gram is singular at maximum jitter".into(),
    })?;
    let innovation = DVector::from_column_slice(y) - w * &gm.mean;
    let coef = linalg::cholesky_solve(&l, &innovation);
    let mean = &gm.mean + &a * coef;
    // B = L⁻¹ Aᵀ, so that A S⁻¹ Aᵀ = Bᵀ B.
    let b = l
        .solve_lower_triangular(&a.transpose())
        .expect("factor has a non-zero diagonal");
    let mut cov = gm.cov.clone();
    cov.gemm(-1.0, &b.transpose(), &b, 1.0);
    Ok(GridMeasure {
        grid: gm.grid.clone(),
        mean,
        cov,
    })
}

/// `count` draws from the grid measure (rows), using the symmetric square
/// root of the covariance.
pub fn sample(gm: &GridMeasure, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let n = gm.grid.len();
    let sym = 0.5 * (&gm.cov + gm.cov.transpose());
    let eig = sym.symmetric_eigen();
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DMatrix::from_fn(n, count, |_, _| StandardNormal.sample(&mut rng));
    let mut draws = (root * xi).transpose();
    for mut row in draws.row_iter_mut() {
        row += gm.mean.transpose();
    }
    Ok(draws)
}

/// Result of the binned Monte Carlo check of the mixture identity.
#[derive(Debug, Clone)]
pub struct MixtureReport {
    pub probes: Vec<f64>,
    pub bins: usize,
    /// `z[bin][probe]`: bin-averaged `f(s) − m̃(s; y)` divided by its standard error.
    pub z: Vec<Vec<f64>>,
    pub max_abs_z: f64,
}

/// Draws prior paths on a grid, observes them through `f`, and checks within
/// quantile bins of the observed value that the empirical mean of the path at
/// each probe matches the analytic posterior mean averaged over the bin.
#[allow(clippy::too_many_arguments)]
pub fn mixture_check(
    k: &Kernel,
    m: &MeanFunction,
    domain: &Domain,
    f: &LinearFunctional,
    grid_n: usize,
    draws: usize,
    bins: usize,
    probe_indices: &[usize],
    seed: u64,
) -> Result<MixtureReport> {
    if bins == 0 || draws < bins {
        return Err(Error::Config("need at least one draw per bin".into()));
    }
    let gm = discretize(k, m, domain, grid_n)?;
    let paths = sample(&gm, draws, seed)?;
    let w = weights_for(f, gm.grid())?;
    let ys = &paths * &w;

    // Posterior mean is affine in y: m̃(s; y) = m(s) + (y − Gm) β(s).
    let gm_f = f.apply(m)?;
    let unit = condition(k, m, std::slice::from_ref(f), &[gm_f + 1.0])?;
    let probes: Vec<f64> = probe_indices
        .iter()
        .map(|&i| gm.grid().get(i).copied().ok_or(Error::Config(format!("probe index {i} is off-grid"))))
        .collect::<Result<_>>()?;
    let beta: Vec<f64> = probes.iter().map(|&s| unit.mean(s) - m.value(s)).collect();
    let post_var: Vec<f64> = probes.iter().map(|&s| unit.variance(s).max(0.0)).collect();

    let mut order: Vec<usize> = (0..draws).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut z = Vec::with_capacity(bins);
    let mut max_abs_z: f64 = 0.0;
    for b in 0..bins {
        let members = &order[b * draws / bins..(b + 1) * draws / bins];
        let count = members.len() as f64;
        let row: Vec<f64> = probe_indices
            .iter()
            .enumerate()
            .map(|(pi, &gi)| {
                let s = probes[pi];
                let diff: f64 = members
                    .iter()
                    .map(|&d| paths[(d, gi)] - (m.value(s) + (ys[d] - gm_f) * beta[pi]))
                    .sum::<f64>()
                    / count;
                let se = (post_var[pi] / count).sqrt().max(1e-300);
                diff / se
            })
            .collect();
        max_abs_z = row.iter().fold(max_abs_z, |acc, v| acc.max(v.abs()));
        z.push(row);
    }
    Ok(MixtureReport {
        probes,
        bins,
        z,
        max_abs_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Weight, DEFAULT_QUAD_ORDER};
    use std::f64::consts::PI;

    fn unit() -> Domain {
        Domain::new(-1.0, 1.0).unwrap()
    }

    fn matern() -> Kernel {
        Kernel::matern52(0.4, 1.0).unwrap()
    }

    #[test]
    fn two_site_grid() {
        let gm = discretize(&matern(), &MeanFunction::Zero, &unit(), 2).unwrap();
        assert_eq!(gm.variance().as_slice(), &[1.0, 1.0]);
        assert!(discretize(&matern(), &MeanFunction::Zero, &unit(), 1).is_err());
    }

    #[test]
    fn grid_covariance_is_symmetric_psd() {
        let gm = discretize(&matern(), &MeanFunction::Constant(0.5), &unit(), 101).unwrap();
        assert_eq!(gm.asymmetry(), 0.0);
        let (lmin, lmax) = gm.eigen_range();
        assert!(lmin >= -1e-8 * lmax);
        assert_eq!(gm.mean()[50], 0.5);
    }

    #[test]
    fn point_weights() {
        let grid = unit().linspace(5);
        let w = weights_for(&LinearFunctional::point(0.5).unwrap(), &grid).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        let w = weights_for(&LinearFunctional::point(0.25).unwrap(), &grid).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0, 0.5, 0.5, 0.0]);
        let w = weights_for(&LinearFunctional::point(1.0).unwrap(), &grid).unwrap();
        assert_eq!(w[4], 1.0);
        assert!(matches!(
            weights_for(&LinearFunctional::point(1.5).unwrap(), &grid),
            Err(Error::SiteOutOfGrid { .. })
        ));
    }

    #[test]
    fn integral_weights_sum_to_length() {
        let grid = unit().linspace(101);
        let f = LinearFunctional::integral(Weight::Constant(1.0), -1.0, 1.0, 10).unwrap();
        assert!((weights_for(&f, &grid).unwrap().sum() - 2.0).abs() < 1e-12);
        // Support not aligned with the grid.
        let f = LinearFunctional::integral(Weight::Constant(1.0), -0.333, 0.517, 10).unwrap();
        assert!((weights_for(&f, &grid).unwrap().sum() - 0.85).abs() < 1e-12);
        // Linear functions are integrated exactly as well.
        let w = weights_for(&f, &grid).unwrap();
        let lin: f64 = grid.iter().zip(w.iter()).map(|(x, wi)| wi * (2.0 * x + 1.0)).sum();
        let exact = (0.517f64.powi(2) - 0.333f64.powi(2)) + 0.85;
        assert!((lin - exact).abs() < 1e-12);
    }

    #[test]
    fn derivative_stencil() {
        let grid = unit().linspace(4001);
        let w = weights_for(&LinearFunctional::derivative(0.0).unwrap(), &grid).unwrap();
        let d: f64 = grid.iter().zip(w.iter()).map(|(x, wi)| wi * (PI * x).sin()).sum();
        assert!((d - PI).abs() < 1e-6);
        // Between nodes the blended stencil stays second-order accurate.
        let site = 0.123456;
        let w = weights_for(&LinearFunctional::derivative(site).unwrap(), &grid).unwrap();
        let d: f64 = grid.iter().zip(w.iter()).map(|(x, wi)| wi * (PI * x).sin()).sum();
        assert!((d - PI * (PI * site).cos()).abs() < 2e-6, "{d}");
        // Boundary stencils still differentiate quadratics exactly.
        let grid = unit().linspace(21);
        for site in [-1.0, -0.9, 1.0] {
            let w = weights_for(&LinearFunctional::derivative(site).unwrap(), &grid).unwrap();
            let d: f64 = grid.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum();
            assert!((d - 2.0 * site).abs() < 1e-10, "{site}: {d}");
        }
    }

    #[test]
    fn conditioning_on_a_node() {
        let gm = discretize(&matern(), &MeanFunction::Zero, &unit(), 41).unwrap();
        let w = weight_matrix(&[LinearFunctional::point(0.5).unwrap()], gm.grid()).unwrap();
        let post = oracle_condition(&gm, &w, &[1.7]).unwrap();
        assert!((post.mean()[30] - 1.7).abs() < 1e-10);
        assert!(post.cov()[(30, 30)].abs() < 1e-10);
    }

    #[test]
    fn observing_the_mean_changes_nothing() {
        let gm = discretize(&matern(), &MeanFunction::Constant(0.3), &unit(), 41).unwrap();
        let fs = [
            LinearFunctional::point(-0.2).unwrap(),
            LinearFunctional::integral(Weight::Constant(1.0), -1.0, 1.0, DEFAULT_QUAD_ORDER).unwrap(),
        ];
        let w = weight_matrix(&fs, gm.grid()).unwrap();
        let y: Vec<f64> = (&w * gm.mean()).iter().copied().collect();
        let post = oracle_condition(&gm, &w, &y).unwrap();
        assert!((post.mean() - gm.mean()).amax() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let gm = discretize(&matern(), &MeanFunction::Zero, &unit(), 31).unwrap();
        assert_eq!(sample(&gm, 1, 9).unwrap(), sample(&gm, 1, 9).unwrap());
        assert_ne!(sample(&gm, 1, 9).unwrap(), sample(&gm, 1, 10).unwrap());
        assert!(sample(&gm, 0, 1).is_err());
    }

    #[test]
    fn zero_covariance_samples_equal_mean() {
        let grid = unit().linspace(5);
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let gm = GridMeasure::new(grid, mean.clone(), DMatrix::zeros(5, 5)).unwrap();
        let s = sample(&gm, 3, 1).unwrap();
        for r in s.row_iter() {
            assert_eq!(r.transpose(), mean);
        }
    }

    #[test]
    fn empirical_prior_moments() {
        let gm = discretize(&matern(), &MeanFunction::Zero, &unit(), 21).unwrap();
        let draws = 10_000;
        let s = sample(&gm, draws, 2024).unwrap();
        let n = draws as f64;
        // Per-entry 3-standard-error bands for mean and covariance.
        let mut inside = 0;
        let mut total = 0;
        for i in 0..21 {
            let col = s.column(i);
            let mean = col.sum() / n;
            let var = gm.cov()[(i, i)];
            total += 1;
            if mean.abs() <= 3.0 * (var / n).sqrt() {
                inside += 1;
            }
            for j in 0..21 {
                let c: f64 = col.iter().zip(s.column(j).iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                let target = gm.cov()[(i, j)];
                let se = ((gm.cov()[(i, i)] * gm.cov()[(j, j)] + target * target) / n).sqrt();
                total += 1;
                if (c - target).abs() <= 3.0 * se {
                    inside += 1;
                }
            }
        }
        assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
        let k00: f64 = s.column(10).iter().map(|v| v * v).sum::<f64>() / n;
        assert!((k00 - 1.0).abs() <= 3.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn bad_shapes() {
        let gm = discretize(&matern(), &MeanFunction::Zero, &unit(), 11).unwrap();
        assert!(oracle_condition(&gm, &DMatrix::zeros(1, 10), &[1.0]).is_err());
        assert!(oracle_condition(&gm, &DMatrix::zeros(1, 11), &[]).is_err());
        assert!(GridMeasure::new(vec![0.0, 0.0], DVector::zeros(2), DMatrix::zeros(2, 2)).is_err());
    }
}
