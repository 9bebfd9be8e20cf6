//! Shared fixtures for the integration tests: the bundled mixed-observation
//! experiment and a generator of random, well-separated functional sets.

#![allow(dead_code)]

use std::path::PathBuf;

use opgp::config::{Experiment, ExperimentConfig, SineTerm, TrueFunction};
use opgp::functionals::{Domain, LinearFunctional, Weight, DEFAULT_QUAD_ORDER};
use opgp::kernels::{Kernel, MeanFunction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fig2_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/fig2.toml")
}

pub fn fig2() -> Experiment {
    ExperimentConfig::load(&fig2_path()).unwrap().build().unwrap()
}

pub fn unit() -> Domain {
    Domain::new(-1.0, 1.0).unwrap()
}

/// A smooth test function with an analytic derivative.
pub fn truth() -> TrueFunction {
    TrueFunction::Sines {
        offset: -0.2,
        slope: 0.5,
        terms: vec![
            SineTerm { amplitude: 1.1, frequency: 1.7, phase: 0.3 },
            SineTerm { amplitude: 0.4, frequency: 4.4, phase: -0.8 },
        ],
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub kernel: Kernel,
    pub mean: MeanFunction,
    pub functionals: Vec<LinearFunctional>,
    pub values: Vec<f64>,
}

/// Point and derivative sites are kept this far apart so that Gram matrices
/// stay comfortably invertible without jitter.
pub const MIN_SEPARATION: f64 = 0.15;

fn fresh_site(rng: &mut ChaCha8Rng, taken: &mut Vec<f64>) -> Option<f64> {
    for _ in 0..200 {
        let s = rng.random_range(-0.9..0.9);
        if taken.iter().all(|t| (t - s).abs() >= MIN_SEPARATION) {
            taken.push(s);
            return Some(s);
        }
    }
    None
}

/// `p` distinct functionals mixing point, derivative, integral and Fourier
/// observations on [-1, 1].
pub fn random_functionals(rng: &mut ChaCha8Rng, p: usize) -> Vec<LinearFunctional> {
    let d = unit();
    let mut sites = Vec::new();
    let mut deriv_sites = Vec::new();
    let mut fourier: Vec<(bool, u32)> = Vec::new();
    let mut out: Vec<LinearFunctional> = Vec::new();
    while out.len() < p {
        let u: f64 = rng.random();
        let f = if u < 0.35 {
            match fresh_site(rng, &mut sites) {
                Some(s) => LinearFunctional::point(s).unwrap(),
                None => continue,
            }
        } else if u < 0.55 {
            match fresh_site(rng, &mut deriv_sites) {
                Some(s) => LinearFunctional::derivative(s).unwrap(),
                None => continue,
            }
        } else if u < 0.8 {
            let a: f64 = rng.random_range(-1.0..0.6);
            let b = (a + rng.random_range(0.4..1.6)).min(1.0);
            let weight = match rng.random_range(0..3) {
                0 => Weight::Constant(rng.random_range(0.5..2.0)),
                1 => Weight::Cosine { omega: rng.random_range(0.5..5.0), center: 0.0 },
                _ => Weight::Sine { omega: rng.random_range(0.5..5.0), center: 0.0 },
            };
            LinearFunctional::integral(weight, a, b, DEFAULT_QUAD_ORDER).unwrap()
        } else {
            let key = (rng.random_bool(0.5), rng.random_range(1..=3u32));
            if fourier.contains(&key) {
                continue;
            }
            fourier.push(key);
            let omega = std::f64::consts::PI * key.1 as f64 / d.half_width();
            let weight = if key.0 {
                Weight::Cosine { omega, center: d.center() }
            } else {
                Weight::Sine { omega, center: d.center() }
            };
            LinearFunctional::integral(weight, d.lo, d.hi, DEFAULT_QUAD_ORDER).unwrap()
        };
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Random Matérn problem with `p` observations taken from [`truth`].
pub fn random_problem(rng: &mut ChaCha8Rng, p: usize) -> Problem {
    let kernel = Kernel::matern52(rng.random_range(0.25..0.5), rng.random_range(0.5..2.0)).unwrap();
    let mean = if rng.random_bool(0.5) {
        MeanFunction::Zero
    } else {
        MeanFunction::Constant(rng.random_range(-0.5..0.5))
    };
    let functionals = random_functionals(rng, p);
    let t = truth();
    let values = functionals.iter().map(|f| f.apply(&t).unwrap()).collect();
    Problem { kernel, mean, functionals, values }
}

/// Random split of `0..p` into `batches` non-empty contiguous ranges.
pub fn random_cuts(rng: &mut ChaCha8Rng, p: usize, batches: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..p).collect();
    for i in 0..cuts.len() {
        let j = rng.random_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts = cuts[..batches - 1].to_vec();
    cuts.sort_unstable();
    cuts.push(p);
    cuts
}
