//! Config-driven experiment runner behind the `opgp` binary.
//!
//! [`run`] assimilates the configured batches one at a time and writes a
//! posterior CSV per checkpoint plus `report.json`. [`verify`] cross-checks
//! the configured problem against the grid oracle and the other evaluation
//! routes. [`sample_prior`] and [`spectrum`] export prior draws and the
//! Mercer diagnostic.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Experiment;
use crate::error::{Error, Result};
use crate::functionals::LinearFunctional;
use crate::kernels::Evaluable;
use crate::linalg;
use crate::oracle;
use crate::posterior::{condition_with_noise, PosteriorGP};
use crate::rkhs_diag::{mercer_spectrum, power_rkhs_check};
use crate::sequential::{PosteriorState, TimingRow, TwoStageExpansion};

pub const ORACLE_TOLERANCE: f64 = 1e-5;
pub const ORACLE_TOLERANCE_DERIVATIVE: f64 = 5e-5;
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;
pub const PARSEVAL_TOLERANCE: f64 = 1e-9;
pub const REPRESENTING_TOLERANCE: f64 = 1e-9;
pub const VARIANCE_SLACK: f64 = 1e-10;
pub const MIN_EIGEN_TOLERANCE: f64 = 1e-8;
/// Largest output grid accepted by [`sample_prior`], which needs a dense
/// eigendecomposition on that grid.
pub const MAX_SAMPLE_GRID: usize = 5_000;
pub const MAX_SAMPLE_COUNT: usize = 100_000;

/// One named pass/fail measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.3e} (threshold {:.1e})", self.name, self.value, self.threshold)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelMeta {
    pub family: &'static str,
    pub lengthscale: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub index: usize,
    pub label: String,
    pub csv: String,
    pub new_observations: usize,
    pub total_observations: usize,
    pub jitter: f64,
    pub fiber_residuals: Vec<f64>,
    pub max_fiber_residual: f64,
    pub batch_vs_sequential_mean: f64,
    pub batch_vs_sequential_variance: f64,
    /// Largest increase of the posterior variance over the previous checkpoint.
    pub max_variance_increase: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: &'static str,
    pub kernel: KernelMeta,
    pub domain: [f64; 2],
    pub quad_order: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub sites: Vec<f64>,
    pub prior_sd: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub checks: Vec<Check>,
    pub timing: Vec<TimingRow>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub csv_paths: Vec<PathBuf>,
    pub report_path: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(contents).map_err(|e| io_err(path, e))
}

fn kernel_meta(exp: &Experiment) -> KernelMeta {
    KernelMeta {
        family: exp.kernel.family().name(),
        lengthscale: exp.kernel.lengthscale(),
        variance: exp.kernel.variance(),
    }
}

fn posterior_csv(sites: &[f64], mean: &[f64], sd: &[f64], prior_sd: &[f64]) -> String {
    let mut out = String::from("s,mean,sd,prior_sd\n");
    for i in 0..sites.len() {
        out.push_str(&format!("{},{},{},{}\n", sites[i], mean[i], sd[i], prior_sd[i]));
    }
    out
}

fn sup_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the configured batches sequentially, writing
/// `posterior_batch<t>.csv` after each batch and `report.json` at the end.
///
/// With no batches, a single `posterior_batch0.csv` holding the prior is
/// written. Singular Gram systems abort the run with an error.
pub fn run(exp: &Experiment, out_dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let k = &exp.kernel;
    let sites = exp.output_sites();
    let prior_var: Vec<f64> = sites.iter().map(|&s| k.eval_unchecked(s, s)).collect();
    let prior_sd: Vec<f64> = prior_var.iter().map(|v| v.sqrt()).collect();
    let scale = exp.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let var_slack = VARIANCE_SLACK * k.variance().max(1.0);

    let mut state = PosteriorState::new(*k, exp.mean.clone());
    let mut all_fs: Vec<LinearFunctional> = Vec::new();
    let mut all_y = Vec::new();
    let mut all_noise = Vec::new();
    let mut prev_var = prior_var.clone();
    let mut checkpoints = Vec::new();
    let mut timing = Vec::new();
    let mut csv_paths = Vec::new();

    for (t, batch) in exp.batches.iter().enumerate() {
        all_fs.extend_from_slice(&batch.functionals);
        all_y.extend_from_slice(&batch.values);
        all_noise.extend_from_slice(&batch.noise);

        let t_full = Instant::now();
        let full = condition_with_noise(k, &exp.mean, &all_fs, &all_y, &all_noise)?;
        let full_secs = t_full.elapsed().as_secs_f64();
        let t_inc = Instant::now();
        state = state.assimilate_with_noise(&batch.functionals, &batch.values, &batch.noise)?;
        let incremental_secs = t_inc.elapsed().as_secs_f64();
        timing.push(TimingRow {
            step: t + 1,
            batch_size: batch.functionals.len(),
            total_observations: all_fs.len(),
            incremental_secs,
            full_secs,
        });

        let mean: Vec<f64> = sites.iter().map(|&s| state.mean(s)).collect();
        let var: Vec<f64> = sites.iter().map(|&s| state.variance(s)).collect();
        let sd: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
        let batch_vs_sequential_mean = sup_diff(mean.iter().copied(), sites.iter().map(|&s| full.mean(s)));
        let batch_vs_sequential_variance =
            sup_diff(var.iter().copied(), sites.iter().map(|&s| full.variance(s)));
        let max_variance_increase = var.iter().zip(&prev_var).map(|(v, p)| v - p).fold(f64::NEG_INFINITY, f64::max);
        let fiber: Vec<f64> = state.fiber_check()?.iter().copied().collect();
        let max_fiber_residual = fiber.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let name = format!("posterior_batch{}.csv", t + 1);
        let path = out_dir.join(&name);
        write_file(&path, posterior_csv(&sites, &mean, &sd, &prior_sd).as_bytes())?;
        csv_paths.push(path);

        checkpoints.push(Checkpoint {
            index: t + 1,
            label: batch.label.clone(),
            csv: name,
            new_observations: batch.functionals.len(),
            total_observations: all_fs.len(),
            jitter: state.jitters().last().copied().unwrap_or(0.0),
            fiber_residuals: fiber,
            max_fiber_residual,
            batch_vs_sequential_mean,
            batch_vs_sequential_variance,
            max_variance_increase,
            mean,
            sd,
        });
        prev_var = var;
    }

    if exp.batches.is_empty() {
        let mean: Vec<f64> = sites.iter().map(|&s| exp.mean.value(s)).collect();
        let path = out_dir.join("posterior_batch0.csv");
        write_file(&path, posterior_csv(&sites, &mean, &prior_sd, &prior_sd).as_bytes())?;
        csv_paths.push(path);
    }

    let mut checks = Vec::new();
    for c in &checkpoints {
        if exp.is_noiseless() {
            checks.push(Check::at_most(
                format!("fiber residual after {}", c.label),
                c.max_fiber_residual,
                exp.tolerance * scale,
            ));
        }
        checks.push(Check::at_most(
            format!("batch vs sequential after {}", c.label),
            c.batch_vs_sequential_mean.max(c.batch_vs_sequential_variance),
            exp.tolerance * scale,
        ));
        checks.push(Check::at_most(
            format!("variance monotone at {}", c.label),
            c.max_variance_increase,
            var_slack,
        ));
    }

    let report = RunReport {
        status: if checks.iter().all(|c| c.passed) { "PASS" } else { "FAILED" },
        kernel: kernel_meta(exp),
        domain: [exp.domain.lo, exp.domain.hi],
        quad_order: exp.quad_order,
        tolerance: exp.tolerance,
        seed: exp.seed,
        sites,
        prior_sd,
        checkpoints,
        checks,
        timing,
    };
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&report_path, json.as_bytes())?;
    Ok(RunOutput {
        report,
        csv_paths,
        report_path,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Sup-norm discrepancy of posterior mean and variance against the grid
/// oracle at every oracle grid site.
pub fn oracle_discrepancy(
    exp: &Experiment,
    posterior: &PosteriorGP,
    grid_n: usize,
) -> Result<(f64, f64)> {
    let gm = oracle::discretize(&exp.kernel, &exp.mean, &exp.domain, grid_n)?;
    let w = oracle::weight_matrix(&exp.functionals(), gm.grid())?;
    let post = oracle::oracle_condition_with_noise(&gm, &w, &exp.values(), &exp.noise())?;
    let grid = post.grid();
    let mean = sup_diff(post.mean().iter().copied(), grid.iter().map(|&s| posterior.mean(s)));
    let var = sup_diff(post.variance().iter().copied(), grid.iter().map(|&s| posterior.variance(s)));
    Ok((mean, var))
}

/// Orthonormality `|Y K Yᵀ − I|_max` and worst relative Parseval defect over
/// `trials` random vectors for the representing sequence of `posterior`.
pub fn representing_axioms(posterior: &PosteriorGP, trials: usize, seed: u64) -> Result<(f64, f64)> {
    let sys = posterior.system();
    let p = sys.len();
    if p == 0 {
        return Ok((0.0, 0.0));
    }
    let y = sys.representing_sequence()?;
    let kf = sys.kgg_factored();
    let ortho = (&y * &kf * y.transpose() - DMatrix::<f64>::identity(p, p)).amax();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parseval: f64 = 0.0;
    for _ in 0..trials {
        let x = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let kx = &kf * &x;
        let lhs = (&y * &kx).norm_squared();
        let rhs = kx.dot(&x);
        parseval = parseval.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE));
    }
    Ok((ortho, parseval))
}

/// Runs every embedded cross-check on the configured observation set.
pub fn verify(exp: &Experiment) -> Result<VerifyReport> {
    let k = &exp.kernel;
    let fs = exp.functionals();
    let ys = exp.values();
    let noise = exp.noise();
    let p = fs.len();
    let scale = ys.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = exp.tolerance * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let mut checks = Vec::new();

    let posterior = condition_with_noise(k, &exp.mean, &fs, &ys, &noise)?;

    if exp.is_noiseless() {
        let fiber = posterior.fiber_check()?.amax();
        checks.push(Check::at_most("fiber residual", fiber, tol));
    }

    let (orc_mean, orc_var) = oracle_discrepancy(exp, &posterior, exp.oracle_n)?;
    let tau = if fs.iter().any(|f| f.needs_derivative()) {
        ORACLE_TOLERANCE_DERIVATIVE
    } else {
        ORACLE_TOLERANCE
    };
    checks.push(Check::at_most(format!("oracle mean (n={})", exp.oracle_n), orc_mean / scale, tau));
    checks.push(Check::at_most(format!("oracle variance (n={})", exp.oracle_n), orc_var, tau));

    let (ortho, parseval) = representing_axioms(&posterior, 100, exp.seed)?;
    checks.push(Check::at_most("representing orthonormality", ortho, ORTHONORMALITY_TOLERANCE));
    checks.push(Check::at_most("representing Parseval", parseval, PARSEVAL_TOLERANCE));

    let grid = exp.domain.linspace(101);
    let rep = posterior.representing()?;
    let rep_mean = sup_diff(grid.iter().map(|&s| rep.mean(s)), grid.iter().map(|&s| posterior.mean(s)));
    let mut rep_cov: f64 = 0.0;
    for &s1 in &grid {
        for &s2 in grid.iter().step_by(10) {
            rep_cov = rep_cov.max((rep.cov(s1, s2) - posterior.cov(s1, s2)).abs());
        }
    }
    checks.push(Check::at_most("representing vs direct mean", rep_mean, REPRESENTING_TOLERANCE * scale));
    checks.push(Check::at_most("representing vs direct covariance", rep_cov, REPRESENTING_TOLERANCE));

    if p >= 2 {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut rng);
            let n_batches = rng.random_range(2..=p.min(4));
            let mut cuts: Vec<usize> = (1..p).collect();
            cuts.shuffle(&mut rng);
            let mut cuts: Vec<usize> = cuts[..n_batches - 1].to_vec();
            cuts.sort_unstable();
            let mut state = PosteriorState::new(*k, exp.mean.clone());
            let mut start = 0;
            for end in cuts.into_iter().chain(std::iter::once(p)) {
                let idx = &order[start..end];
                let bf: Vec<_> = idx.iter().map(|&i| fs[i].clone()).collect();
                let by: Vec<_> = idx.iter().map(|&i| ys[i]).collect();
                let bn: Vec<_> = idx.iter().map(|&i| noise[i]).collect();
                state = state.assimilate_with_noise(&bf, &by, &bn)?;
                start = end;
            }
            let queries: Vec<f64> = (0..20).map(|_| rng.random_range(exp.domain.lo..=exp.domain.hi)).collect();
            for (qi, &s) in queries.iter().enumerate() {
                worst = worst.max((state.mean(s) - posterior.mean(s)).abs() / scale);
                let s2 = queries[(qi + 7) % queries.len()];
                worst = worst.max((state.cov(s, s2) - posterior.cov(s, s2)).abs());
            }
        }
        checks.push(Check::at_most("transitivity sweep", worst, exp.tolerance));
    }

    if p >= 2 && exp.is_noiseless() {
        let (b1, b2) = fs.split_at(p - 1);
        let (y1, y2) = ys.split_at(p - 1);
        let expansion = TwoStageExpansion::new(k, &exp.mean, b1, y1, b2, y2)?;
        let state = PosteriorState::new(*k, exp.mean.clone()).assimilate(b1, y1)?.assimilate(b2, y2)?;
        let mut worst: f64 = 0.0;
        for &s in &grid {
            worst = worst.max((expansion.mean(s) - state.mean(s)).abs() / scale);
        }
        for &s1 in grid.iter().step_by(5) {
            for &s2 in grid.iter().step_by(10) {
                worst = worst.max((expansion.cov(s1, s2) - state.cov(s1, s2)).abs());
            }
        }
        checks.push(Check::at_most("expanded two-stage formulae", worst, exp.tolerance));
    }

    let var_slack = VARIANCE_SLACK * k.variance().max(1.0);
    let increase = grid
        .iter()
        .map(|&s| posterior.variance(s) - k.eval_unchecked(s, s))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("variance below prior", increase, var_slack));
    let probes: Vec<f64> = (0..30).map(|_| rng.random_range(exp.domain.lo..=exp.domain.hi)).collect();
    let min_eig = linalg::min_eigenvalue(&posterior.cov_matrix(&probes));
    checks.push(Check::at_least("posterior Gram min eigenvalue", min_eig, -MIN_EIGEN_TOLERANCE));

    Ok(VerifyReport { checks })
}

/// Writes `prior_samples.csv`: one row per output site, one column per draw.
pub fn sample_prior(exp: &Experiment, count: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if count == 0 || count > MAX_SAMPLE_COUNT {
        return Err(Error::Config(format!("sample count must lie in [1, {MAX_SAMPLE_COUNT}], got {count}")));
    }
    if exp.output_grid > MAX_SAMPLE_GRID {
        return Err(Error::Config(format!(
            "prior sampling supports output grids up to {MAX_SAMPLE_GRID} sites"
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let gm = oracle::discretize(&exp.kernel, &exp.mean, &exp.domain, exp.output_grid)?;
    let draws = oracle::sample(&gm, count, seed)?;
    let mut out = String::from("s");
    for j in 1..=count {
        out.push_str(&format!(",sample{j}"));
    }
    out.push('\n');
    for (i, s) in gm.grid().iter().enumerate() {
        out.push_str(&s.to_string());
        for j in 0..count {
            out.push_str(&format!(",{}", draws[(j, i)]));
        }
        out.push('\n');
    }
    let path = out_dir.join("prior_samples.csv");
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub kernel: KernelMeta,
    pub domain: [f64; 2],
    pub measure: &'static str,
    pub grid_size: usize,
    pub theta: f64,
    pub resolved: usize,
    pub clamped: usize,
    pub tail_ratio: f64,
    pub verdict: &'static str,
}

/// Writes `spectrum.csv` (index, eigenvalue, term, partial_sum) and
/// `spectrum.json` with the verdict and metadata.
pub fn spectrum(exp: &Experiment, theta: f64, out_dir: &Path) -> Result<SpectrumReport> {
    let spec = mercer_spectrum(&exp.kernel, &exp.domain, exp.spectrum_n)?;
    let check = power_rkhs_check(&spec, theta)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut out = String::from("index,eigenvalue,term,partial_sum\n");
    for i in 0..spec.eigenvalues.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            spec.eigenvalues[i],
            check.terms[i],
            check.partial_sums[i]
        ));
    }
    write_file(&out_dir.join("spectrum.csv"), out.as_bytes())?;
    let report = SpectrumReport {
        kernel: kernel_meta(exp),
        domain: [exp.domain.lo, exp.domain.hi],
        measure: spec.measure,
        grid_size: spec.grid_size,
        theta,
        resolved: spec.resolved(),
        clamped: spec.clamped,
        tail_ratio: check.tail_ratio,
        verdict: check.verdict.as_str(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&out_dir.join("spectrum.json"), json.as_bytes())?;
    Ok(report)
}
