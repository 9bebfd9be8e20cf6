//! Experiment configuration: schema, parsing (TOML or JSON) and validation
//! into ready-to-run objects.
//!
//! The schema is documented in `docs/config.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{fourier_functionals, Domain, LinearFunctional, Weight, DEFAULT_QUAD_ORDER};
use crate::kernels::{CubicSpline, Evaluable, Kernel, KernelFamily, MeanFunction};
use crate::rkhs_diag::DEFAULT_SPECTRUM_N;

pub const MAX_OUTPUT_GRID: usize = 100_000;
pub const MAX_ORACLE_N: usize = 20_001;
pub const MAX_QUAD_ORDER: usize = 2_000;
/// Bound on quadrature nodes summed over all integral observations.
pub const MAX_TOTAL_NODES: usize = 200_000;
pub const MAX_OBSERVATIONS: usize = 5_000;
pub const MAX_SPECTRUM_N: usize = 4_096;
pub const MAX_TABLE_LEN: usize = 100_000;
pub const MAX_SINE_TERMS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub mean: MeanSpec,
    #[serde(default)]
    pub true_function: Option<FunctionSpec>,
    #[serde(default)]
    pub batches: Vec<BatchSpec>,
    #[serde(default = "default_output_grid")]
    pub output_grid: usize,
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_spectrum_n")]
    pub spectrum_n: usize,
}

fn default_output_grid() -> usize {
    401
}
fn default_oracle_n() -> usize {
    4001
}
fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_spectrum_n() -> usize {
    DEFAULT_SPECTRUM_N
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySpec {
    Matern52,
    SquaredExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: FamilySpec,
    pub lengthscale: f64,
    #[serde(default = "one")]
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Analytic or tabulated ground-truth function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `offset + slope·x + Σ amplitude·sin(frequency·x + phase)`
    Sines {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        slope: f64,
        #[serde(default)]
        terms: Vec<SineTerm>,
    },
    /// `Σ c_i x^i`
    Polynomial { coefficients: Vec<f64> },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub observations: Vec<ObservationSpec>,
}

/// Observed value: a number, or the string `"from_true"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Explicit(f64),
    Keyword(String),
}

impl Default for ValueSpec {
    fn default() -> Self {
        ValueSpec::Keyword(FROM_TRUE.into())
    }
}

pub const FROM_TRUE: &str = "from_true";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    One,
    Constant { value: f64 },
    /// `cos(π j (x − c) / L)` with `c`, `L` the domain centre and half-width.
    Cos { index: u32 },
    Sin { index: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    Point {
        site: f64,
        #[serde(default)]
        value: ValueSpec,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Derivative {
        site: f64,
        #[serde(default)]
        value: ValueSpec,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Integral {
        #[serde(default)]
        weight: WeightSpec,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
        #[serde(default)]
        value: ValueSpec,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        label: Option<String>,
    },
    /// The first `count` real trigonometric coefficients over the domain,
    /// interleaved cos₁, sin₁, cos₂, …
    Fourier {
        count: usize,
        #[serde(default)]
        values: Vec<ValueSpec>,
        #[serde(default)]
        noise: f64,
    },
}

/// Ground-truth function resolved from a [`FunctionSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum TrueFunction {
    Sines {
        offset: f64,
        slope: f64,
        terms: Vec<SineTerm>,
    },
    Polynomial(Vec<f64>),
    Tabulated(CubicSpline),
}

impl Evaluable for TrueFunction {
    fn value(&self, x: f64) -> f64 {
        match self {
            TrueFunction::Sines { offset, slope, terms } => {
                offset + slope * x + terms.iter().map(|t| t.amplitude * (t.frequency * x + t.phase).sin()).sum::<f64>()
            }
            TrueFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            TrueFunction::Tabulated(s) => s.value(x),
        }
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        Some(match self {
            TrueFunction::Sines { slope, terms, .. } => {
                slope
                    + terms
                        .iter()
                        .map(|t| t.amplitude * t.frequency * (t.frequency * x + t.phase).cos())
                        .sum::<f64>()
            }
            TrueFunction::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * x + i as f64 * ci),
            TrueFunction::Tabulated(s) => s.slope(x),
        })
    }
}

/// A validated batch of observations.
#[derive(Debug, Clone)]
pub struct ObservationBatch {
    pub label: String,
    pub functionals: Vec<LinearFunctional>,
    pub values: Vec<f64>,
    pub noise: Vec<f64>,
}

/// A validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub domain: Domain,
    pub kernel: Kernel,
    pub mean: MeanFunction,
    pub truth: Option<TrueFunction>,
    pub batches: Vec<ObservationBatch>,
    pub output_grid: usize,
    pub oracle_n: usize,
    pub quad_order: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub spectrum_n: usize,
}

impl Experiment {
    pub fn functionals(&self) -> Vec<LinearFunctional> {
        self.batches.iter().flat_map(|b| b.functionals.iter().cloned()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.batches.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn noise(&self) -> Vec<f64> {
        self.batches.iter().flat_map(|b| b.noise.iter().copied()).collect()
    }

    pub fn is_noiseless(&self) -> bool {
        self.batches.iter().all(|b| b.noise.iter().all(|&v| v == 0.0))
    }

    pub fn output_sites(&self) -> Vec<f64> {
        self.domain.linspace(self.output_grid)
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} must be finite, got {v}")))
    }
}

fn in_range(name: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} must lie in [{lo}, {hi}], got {v}")))
    }
}

fn table(xs: &[f64], ys: &[f64]) -> Result<CubicSpline> {
    if xs.len() > MAX_TABLE_LEN {
        return Err(cfg_err(format!("tables are limited to {MAX_TABLE_LEN} entries")));
    }
    CubicSpline::natural(xs.to_vec(), ys.to_vec()).map_err(|e| cfg_err(e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("invalid TOML config: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| cfg_err(format!("invalid JSON config: {e}")))
    }

    /// Reads a config file; `.json` files are parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// Validates the configuration and resolves functionals and observed values.
    pub fn build(&self) -> Result<Experiment> {
        let domain = Domain::new(finite("domain.lo", self.domain.lo)?, finite("domain.hi", self.domain.hi)?)?;
        let family = match self.kernel.family {
            FamilySpec::Matern52 => KernelFamily::Matern52,
            FamilySpec::SquaredExponential => KernelFamily::SquaredExponential,
        };
        let kernel = Kernel::new(family, self.kernel.lengthscale, self.kernel.variance)
            .map_err(|e| cfg_err(e.to_string()))?;
        let mean = match &self.mean {
            MeanSpec::Zero => MeanFunction::Zero,
            MeanSpec::Constant { value } => MeanFunction::Constant(finite("mean.value", *value)?),
            MeanSpec::Tabulated { xs, ys } => MeanFunction::Tabulated(table(xs, ys)?),
        };
        let truth = match &self.true_function {
            None => None,
            Some(FunctionSpec::Sines { offset, slope, terms }) => {
                finite("true_function.offset", *offset)?;
                finite("true_function.slope", *slope)?;
                for t in terms {
                    finite("sine amplitude", t.amplitude)?;
                    finite("sine frequency", t.frequency)?;
                    finite("sine phase", t.phase)?;
                }
                if terms.len() > MAX_SINE_TERMS {
                    return Err(cfg_err(format!("at most {MAX_SINE_TERMS} sine terms are supported")));
                }
                Some(TrueFunction::Sines {
                    offset: *offset,
                    slope: *slope,
                    terms: terms.clone(),
                })
            }
            Some(FunctionSpec::Polynomial { coefficients }) => {
                if coefficients.is_empty() || coefficients.len() > 64 {
                    return Err(cfg_err("polynomial needs between 1 and 64 coefficients"));
                }
                for c in coefficients {
                    finite("polynomial coefficient", *c)?;
                }
                Some(TrueFunction::Polynomial(coefficients.clone()))
            }
            Some(FunctionSpec::Tabulated { xs, ys }) => Some(TrueFunction::Tabulated(table(xs, ys)?)),
        };

        let output_grid = in_range("output_grid", self.output_grid, 2, MAX_OUTPUT_GRID)?;
        let oracle_n = in_range("oracle_n", self.oracle_n, 3, MAX_ORACLE_N)?;
        let quad_order = in_range("quad_order", self.quad_order, 1, MAX_QUAD_ORDER)?;
        let spectrum_n = in_range("spectrum_n", self.spectrum_n, 16, MAX_SPECTRUM_N)?;
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(cfg_err(format!("tolerance must be positive, got {}", self.tolerance)));
        }

        let nodes: usize = self
            .batches
            .iter()
            .flat_map(|b| &b.observations)
            .map(|o| match o {
                ObservationSpec::Integral { .. } => quad_order,
                ObservationSpec::Fourier { count, .. } => count.saturating_mul(quad_order),
                _ => 0,
            })
            .fold(0usize, usize::saturating_add);
        if nodes > MAX_TOTAL_NODES {
            return Err(cfg_err(format!(
                "integral observations need {nodes} quadrature nodes, more than the limit of {MAX_TOTAL_NODES}"
            )));
        }

        let mut total = 0usize;
        let mut batches = Vec::with_capacity(self.batches.len());
        for (bi, spec) in self.batches.iter().enumerate() {
            let label = spec.label.clone().unwrap_or_else(|| format!("batch{}", bi + 1));
            let mut b = ObservationBatch {
                label,
                functionals: Vec::new(),
                values: Vec::new(),
                noise: Vec::new(),
            };
            for obs in &spec.observations {
                let expanded = expand(obs, &domain, quad_order, total)?;
                total += expanded.len();
                if total > MAX_OBSERVATIONS {
                    return Err(cfg_err(format!("at most {MAX_OBSERVATIONS} observations are supported")));
                }
                for (f, value, noise) in expanded {
                    f.check_domain(&domain).map_err(|e| cfg_err(e.to_string()))?;
                    if !(noise.is_finite() && noise >= 0.0) {
                        return Err(cfg_err(format!("noise of `{f}` must be finite and non-negative")));
                    }
                    let y = resolve_value(&value, &f, truth.as_ref())?;
                    b.functionals.push(f);
                    b.values.push(y);
                    b.noise.push(noise);
                }
            }
            batches.push(b);
        }

        Ok(Experiment {
            domain,
            kernel,
            mean,
            truth,
            batches,
            output_grid,
            oracle_n,
            quad_order,
            tolerance: self.tolerance,
            seed: self.seed,
            spectrum_n,
        })
    }
}

fn resolve_value(value: &ValueSpec, f: &LinearFunctional, truth: Option<&TrueFunction>) -> Result<f64> {
    match value {
        ValueSpec::Explicit(v) => finite(&format!("value of `{f}`"), *v),
        ValueSpec::Keyword(k) if k == FROM_TRUE => {
            let t = truth.ok_or_else(|| cfg_err(format!("`{f}` uses from_true but no true_function is configured")))?;
            let v = f.apply(t)?;
            finite(&format!("true value of `{f}`"), v)
        }
        ValueSpec::Keyword(k) => Err(cfg_err(format!("unknown value keyword `{k}` (expected a number or \"from_true\")"))),
    }
}

fn expand(
    obs: &ObservationSpec,
    domain: &Domain,
    quad_order: usize,
    offset: usize,
) -> Result<Vec<(LinearFunctional, ValueSpec, f64)>> {
    let idx = offset + 1;
    Ok(match obs {
        ObservationSpec::Point { site, value, noise, label } => {
            let f = LinearFunctional::point_labeled(
                finite("site", *site)?,
                label.clone().unwrap_or_else(|| format!("obs{idx}:point({site})")),
            )?;
            vec![(f, value.clone(), *noise)]
        }
        ObservationSpec::Derivative { site, value, noise, label } => {
            let f = LinearFunctional::derivative_labeled(
                finite("site", *site)?,
                label.clone().unwrap_or_else(|| format!("obs{idx}:deriv({site})")),
            )?;
            vec![(f, value.clone(), *noise)]
        }
        ObservationSpec::Integral { weight, lo, hi, value, noise, label } => {
            let lo = finite("integral lo", lo.unwrap_or(domain.lo))?;
            let hi = finite("integral hi", hi.unwrap_or(domain.hi))?;
            let omega = |j: u32| {
                if j == 0 {
                    Err(cfg_err("trigonometric weight index starts at 1"))
                } else {
                    Ok(std::f64::consts::PI * j as f64 / domain.half_width())
                }
            };
            let w = match *weight {
                WeightSpec::One => Weight::Constant(1.0),
                WeightSpec::Constant { value } => Weight::Constant(finite("weight value", value)?),
                WeightSpec::Cos { index } => Weight::Cosine { omega: omega(index)?, center: domain.center() },
                WeightSpec::Sin { index } => Weight::Sine { omega: omega(index)?, center: domain.center() },
            };
            let f = LinearFunctional::integral_labeled(
                w,
                lo,
                hi,
                quad_order,
                label.clone().unwrap_or_else(|| format!("obs{idx}:integral[{lo}, {hi}]")),
            )
            .map_err(|e| cfg_err(e.to_string()))?;
            vec![(f, value.clone(), *noise)]
        }
        ObservationSpec::Fourier { count, values, noise } => {
            in_range("fourier count", *count, 1, MAX_OBSERVATIONS)?;
            if !values.is_empty() && values.len() != *count {
                return Err(cfg_err(format!(
                    "fourier block has {} values for {count} coefficients",
                    values.len()
                )));
            }
            fourier_functionals(*count, domain, quad_order)?
                .into_iter()
                .enumerate()
                .map(|(i, f)| {
                    let label = format!("obs{}:{}", idx + i, f.label());
                    let v = values.get(i).cloned().unwrap_or_default();
                    (f.with_label(label), v, *noise)
                })
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [domain]
        lo = -1.0
        hi = 1.0

        [kernel]
        family = "matern52"
        lengthscale = 0.4
    "#;

    #[test]
    fn minimal_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.output_grid, 401);
        assert_eq!(cfg.oracle_n, 4001);
        assert_eq!(cfg.quad_order, 200);
        assert_eq!(cfg.kernel.variance, 1.0);
        let exp = cfg.build().unwrap();
        assert!(exp.batches.is_empty());
        assert_eq!(exp.mean, MeanFunction::Zero);
    }

    #[test]
    fn full_schema() {
        let text = format!(
            "seed = 3
            {MINIMAL}
            [mean]
            kind = \"constant\"
            value = 0.5

            [true_function]
            kind = \"sines\"
            offset = 0.1
            terms = [{{ amplitude = 1.0, frequency = 2.0 }}]

            [[batches]]
            label = \"first\"
            observations = [
              {{ type = \"point\", site = 0.2 }},
              {{ type = \"point\", site = -0.2, value = 1.5 }},
              {{ type = \"integral\", weight = {{ kind = \"cos\", index = 2 }}, noise = 0.01 }},
            ]

            [[batches]]
            observations = [
              {{ type = \"fourier\", count = 3 }},
              {{ type = \"derivative\", site = 0.0 }},
            ]
            "
        );
        let exp = ExperimentConfig::from_toml_str(&text).unwrap().build().unwrap();
        assert_eq!(exp.batches.len(), 2);
        assert_eq!(exp.batches[0].label, "first");
        assert_eq!(exp.batches[1].label, "batch2");
        assert_eq!(exp.batches[1].functionals.len(), 4);
        assert!((exp.batches[0].values[0] - (0.1 + 0.4f64.sin())).abs() < 1e-15);
        assert_eq!(exp.batches[0].values[1], 1.5);
        assert_eq!(exp.batches[0].noise[2], 0.01);
        assert!((exp.batches[1].values[3] - 2.0).abs() < 1e-15);
        assert!(!exp.is_noiseless());
    }

    #[test]
    fn json_is_the_same_schema() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&json).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            // unknown field
            format!("bogus = 1\n{MINIMAL}"),
            // from_true without a true function
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"point\", site = 0.0 }}]"),
            // site outside the domain
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"point\", site = 2.0, value = 1.0 }}]"),
            // bad keyword
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"point\", site = 0.0, value = \"nope\" }}]"),
            // limits
            format!("output_grid = 1\n{MINIMAL}"),
            format!("quad_order = 100000\n{MINIMAL}"),
            // too many quadrature nodes
            format!("quad_order = 2000\n{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"fourier\", count = 101, values = [] }}]"),
            format!("tolerance = -1.0\n{MINIMAL}"),
            // fourier value count mismatch
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"fourier\", count = 2, values = [1.0] }}]"),
            // negative noise
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"point\", site = 0.0, value = 1.0, noise = -1.0 }}]"),
            // trig index 0
            format!("{MINIMAL}\n[[batches]]\nobservations = [{{ type = \"integral\", weight = {{ kind = \"sin\", index = 0 }}, value = 0.0 }}]"),
        ];
        for text in &cases {
            let r = ExperimentConfig::from_toml_str(text).and_then(|c| c.build());
            assert!(matches!(r, Err(Error::Config(_))), "accepted:\n{text}\n{r:?}");
        }
        let bad_kernel = MINIMAL.replace("0.4", "-0.4");
        assert!(ExperimentConfig::from_toml_str(&bad_kernel).unwrap().build().is_err());
    }

    #[test]
    fn polynomial_truth_derivative() {
        let t = TrueFunction::Polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(t.value(2.0), 17.0);
        assert_eq!(t.derivative(2.0), Some(14.0));
    }
}
