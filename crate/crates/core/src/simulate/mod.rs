//! Seeded path samplers and Monte Carlo tail estimation.
//!
//! Paths are vectors of `f64` states. Discrete chains (finite kernels, categorical bases)
//! store the state index as a float; continuous chains store the value itself.

mod experiment;

pub use experiment::{
    append_csv, clopper_pearson, run_tail_experiment, shipped_experiments, CsvRow, TailExperiment, TailResult,
    CI_LEVEL,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Continuous, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{stationary, FiniteKernel};

/// Stationary law of a Doeblin chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSampler {
    /// Uniform on `[0, 1]`.
    Uniform,
    StdNormal,
    /// Rate-one exponential.
    Exponential,
    /// Index `i` with probability `weights[i]`.
    Categorical { weights: Vec<f64> },
    /// `Beta(a, b)`; the mean of a clamped affine map has no closed form here.
    Beta { a: f64, b: f64 },
}

impl BaseSampler {
    pub fn label(&self) -> String {
        match self {
            Self::Uniform => "uniform".into(),
            Self::StdNormal => "std_normal".into(),
            Self::Exponential => "exponential".into(),
            Self::Categorical { weights } => format!("categorical[{}]", weights.len()),
            Self::Beta { a, b } => format!("beta({a},{b})"),
        }
    }

    fn is_discrete(&self) -> bool {
        matches!(self, Self::Categorical { .. })
    }

    /// Resolves a sampler id from the command line; only parameter-free laws have ids.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "uniform" => Ok(Self::Uniform),
            "std_normal" | "normal" => Ok(Self::StdNormal),
            "exponential" => Ok(Self::Exponential),
            other => Err(Error::invalid(format!(
                "unknown sampler id '{other}' (expected uniform, std_normal or exponential)"
            ))),
        }
    }
}

/// Chain driving a tail experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChainConfig {
    Finite {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    /// Hold with probability `lambda`, otherwise redraw from `base`.
    Doeblin { lambda: f64, base: BaseSampler },
    /// `X' = rho X + sqrt(1 - rho^2) xi` with standard normal `xi`.
    Ar1 { rho: f64 },
}

impl ChainConfig {
    pub fn label(&self) -> String {
        match self {
            Self::Finite { p } => format!("finite[{}]", p.len()),
            Self::Doeblin { lambda, base } => format!("doeblin({lambda},{})", base.label()),
            Self::Ar1 { rho } => format!("ar1({rho})"),
        }
    }

    fn is_discrete(&self) -> bool {
        match self {
            Self::Finite { .. } => true,
            Self::Doeblin { base, .. } => base.is_discrete(),
            Self::Ar1 { .. } => false,
        }
    }

    fn n_states(&self) -> Option<usize> {
        match self {
            Self::Finite { p } => Some(p.len()),
            Self::Doeblin {
                base: BaseSampler::Categorical { weights },
                ..
            } => Some(weights.len()),
            _ => None,
        }
    }
}

/// The observable `f`, valued in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FSpec {
    /// `f(i) = values[i]` on a discrete state space.
    Vector { values: Vec<f64> },
    /// `1{x > 0}`.
    IndicatorPositive,
    /// `clamp((x - a) / (b - a), 0, 1)`.
    AffineClamp { a: f64, b: f64 },
}

impl FSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Vector { values } => format!(
                "vector({})",
                values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
            ),
            Self::IndicatorPositive => "indicator_positive".into(),
            Self::AffineClamp { a, b } => format!("affine_clamp({a},{b})"),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Vector { values } => values[x as usize],
            Self::IndicatorPositive => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::AffineClamp { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    /// Checks that `f` fits the chain's state space.
    pub fn validate_for(&self, chain: &ChainConfig) -> Result<()> {
        match self {
            Self::Vector { values } => {
                let Some(size) = chain.n_states() else {
                    return Err(Error::invalid("vector f needs a discrete state space"));
                };
                if values.len() != size {
                    return Err(Error::invalid(format!(
                        "f has {} entries, chain has {size} states",
                        values.len()
                    )));
                }
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::invalid(format!("f[{i}] = {v} outside [0, 1]")));
                }
                Ok(())
            }
            _ if chain.is_discrete() => Err(Error::invalid(format!(
                "{} needs a real-valued chain; use a vector f",
                self.label()
            ))),
            Self::AffineClamp { a, b } if !(a < b) || !a.is_finite() || !b.is_finite() => {
                Err(Error::invalid(format!("affine_clamp needs finite a < b, got ({a}, {b})")))
            }
            _ => Ok(()),
        }
    }
}

/// A validated sampler ready for repeated path draws.
#[derive(Debug, Clone)]
pub struct PreparedChain {
    kind: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Finite {
        start: WeightedIndex<f64>,
        rows: Vec<WeightedIndex<f64>>,
    },
    Doeblin {
        hold: f64,
        base: PreparedBase,
    },
    Ar1 {
        rho: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone)]
enum PreparedBase {
    Uniform,
    StdNormal,
    Exponential,
    Categorical(WeightedIndex<f64>),
    Beta(Beta<f64>),
}

impl PreparedBase {
    fn new(base: &BaseSampler) -> Result<Self> {
        Ok(match base {
            BaseSampler::Uniform => Self::Uniform,
            BaseSampler::StdNormal => Self::StdNormal,
            BaseSampler::Exponential => Self::Exponential,
            BaseSampler::Categorical { weights } => Self::Categorical(
                WeightedIndex::new(weights).map_err(|e| Error::invalid(format!("categorical weights: {e}")))?,
            ),
            BaseSampler::Beta { a, b } => {
                Self::Beta(Beta::new(*a, *b).map_err(|e| Error::invalid(format!("beta({a}, {b}): {e}")))?)
            }
        })
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Uniform => rng.random::<f64>(),
            Self::StdNormal => rng.sample(StandardNormal),
            Self::Exponential => rng.sample(Exp1),
            Self::Categorical(w) => w.sample(rng) as f64,
            Self::Beta(b) => b.sample(rng),
        }
    }
}

impl PreparedChain {
    pub fn new(chain: &ChainConfig) -> Result<Self> {
        let kind = match chain {
            ChainConfig::Finite { p } => {
                let size = p.len();
                let kernel = FiniteKernel::new(p.clone(), vec![0.0; size])?;
                let pi = stationary(&kernel)?;
                let start = WeightedIndex::new(pi.as_slice()).map_err(|e| Error::invalid(e.to_string()))?;
                let rows = p
                    .iter()
                    .map(|r| WeightedIndex::new(r).map_err(|e| Error::invalid(e.to_string())))
                    .collect::<Result<_>>()?;
                Prepared::Finite { start, rows }
            }
            ChainConfig::Doeblin { lambda, base } => {
                if !(0.0..1.0).contains(lambda) {
                    return Err(Error::invalid(format!("lambda = {lambda} must lie in [0, 1)")));
                }
                Prepared::Doeblin {
                    hold: *lambda,
                    base: PreparedBase::new(base)?,
                }
            }
            ChainConfig::Ar1 { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::invalid(format!("rho = {rho} must satisfy |rho| < 1")));
                }
                Prepared::Ar1 {
                    rho: *rho,
                    scale: (1.0 - rho * rho).sqrt(),
                }
            }
        };
        Ok(Self { kind })
    }

    /// Draws a stationary path of length `n` into `out`.
    pub fn fill_path(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<f64>) {
        out.clear();
        if n == 0 {
            return;
        }
        match &self.kind {
            Prepared::Finite { start, rows } => {
                let mut x = start.sample(rng);
                out.push(x as f64);
                for _ in 1..n {
                    x = rows[x].sample(rng);
                    out.push(x as f64);
                }
            }
            Prepared::Doeblin { hold, base } => {
                let mut x = base.draw(rng);
                out.push(x);
                for _ in 1..n {
                    if rng.random::<f64>() >= *hold {
                        x = base.draw(rng);
                    }
                    out.push(x);
                }
            }
            Prepared::Ar1 { rho, scale } => {
                let mut x: f64 = rng.sample(StandardNormal);
                out.push(x);
                for _ in 1..n {
                    let xi: f64 = rng.sample(StandardNormal);
                    x = rho * x + scale * xi;
                    out.push(x);
                }
            }
        }
    }
}

/// Path of replicate `index` under `seed`; equal arguments give equal paths.
pub fn sample_path(chain: &ChainConfig, n: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
    let prepared = PreparedChain::new(chain)?;
    let mut out = Vec::with_capacity(n);
    prepared.fill_path(&mut rng::stream(seed, index), n, &mut out);
    Ok(out)
}

/// Closed-form stationary mean of `f`, or `None` when it has no closed form here.
pub fn exact_mean(chain: &ChainConfig, f: &FSpec) -> Result<Option<f64>> {
    f.validate_for(chain)?;
    Ok(match (chain, f) {
        (ChainConfig::Finite { p }, FSpec::Vector { values }) => {
            let kernel = FiniteKernel::new(p.clone(), values.clone())?;
            Some(stationary(&kernel)?.mean(values))
        }
        (
            ChainConfig::Doeblin {
                base: BaseSampler::Categorical { weights },
                ..
            },
            FSpec::Vector { values },
        ) => {
            let total: f64 = weights.iter().sum();
            Some(weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total)
        }
        (ChainConfig::Doeblin { base, .. }, f) => continuous_mean(base, f),
        (ChainConfig::Ar1 { .. }, f) => continuous_mean(&BaseSampler::StdNormal, f),
        _ => None,
    })
}

/// `E f(X)` for the continuous laws, through `E clamp((X-a)/(b-a)) = (H(b) - H(a)) / (b - a)`
/// with `H` an antiderivative of the survival function.
fn continuous_mean(base: &BaseSampler, f: &FSpec) -> Option<f64> {
    let normal = Normal::standard();
    let survival = |x: f64| -> Option<f64> {
        match base {
            BaseSampler::Uniform => Some((1.0 - x).clamp(0.0, 1.0)),
            BaseSampler::Exponential => Some(if x < 0.0 { 1.0 } else { (-x).exp() }),
            BaseSampler::StdNormal => Some(normal.sf(x)),
            _ => None,
        }
    };
    let antiderivative = |x: f64| -> Option<f64> {
        match base {
            BaseSampler::Uniform => Some(if x <= 0.0 {
                x
            } else if x <= 1.0 {
                x - 0.5 * x * x
            } else {
                0.5
            }),
            BaseSampler::Exponential => Some(if x <= 0.0 { x } else { 1.0 - (-x).exp() }),
            BaseSampler::StdNormal => Some(x * normal.sf(x) - normal.pdf(x)),
            _ => None,
        }
    };
    match f {
        FSpec::IndicatorPositive => survival(0.0),
        FSpec::AffineClamp { a, b } => Some((antiderivative(*b)? - antiderivative(*a)?) / (b - a)),
        FSpec::Vector { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paths_are_reproducible() {
        let chain = ChainConfig::Doeblin {
            lambda: 0.4,
            base: BaseSampler::StdNormal,
        };
        assert_eq!(sample_path(&chain, 50, 9, 3).unwrap(), sample_path(&chain, 50, 9, 3).unwrap());
        assert_ne!(sample_path(&chain, 50, 9, 3).unwrap(), sample_path(&chain, 50, 9, 4).unwrap());
    }

    #[test]
    fn doeblin_without_memory_redraws_every_step() {
        let chain = ChainConfig::Doeblin {
            lambda: 0.0,
            base: BaseSampler::Uniform,
        };
        let path = sample_path(&chain, 1000, 1, 0).unwrap();
        assert!(path.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn doeblin_refresh_count() {
        let lambda = 0.99;
        let n = 100_000usize;
        let chain = ChainConfig::Doeblin {
            lambda,
            base: BaseSampler::Uniform,
        };
        let path = sample_path(&chain, n, 2024, 0).unwrap();
        // continuous base: every refresh changes the value almost surely
        let refreshes = path.windows(2).filter(|w| w[0] != w[1]).count() as f64;
        let m = (n - 1) as f64;
        let mean = m * (1.0 - lambda);
        let sd = (m * lambda * (1.0 - lambda)).sqrt();
        assert!((refreshes - mean).abs() <= 3.0 * sd, "{refreshes} vs {mean} +- {sd}");
    }

    #[test]
    fn ar1_moments() {
        let chain = ChainConfig::Ar1 { rho: 0.5 };
        let path = sample_path(&chain, 200_000, 5, 0).unwrap();
        let n = path.len() as f64;
        let mean = path.iter().sum::<f64>() / n;
        let var = path.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let lag1 = path.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0) / var;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
        assert!((lag1 - 0.5).abs() < 0.02);
    }

    #[test]
    fn ar1_without_memory_is_iid_normal() {
        let path = sample_path(&ChainConfig::Ar1 { rho: 0.0 }, 100_000, 8, 0).unwrap();
        let n = path.len() as f64;
        let lag1 = path.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!(lag1.abs() < 0.02);
        let pos = path.iter().filter(|&&x| x > 0.0).count() as f64 / n;
        assert!((pos - 0.5).abs() < 0.01);
    }

    #[test]
    fn finite_chain_visits_by_pi() {
        let chain = ChainConfig::Finite {
            p: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
        };
        let path = sample_path(&chain, 200_000, 3, 0).unwrap();
        let frac = path.iter().filter(|&&x| x == 1.0).count() as f64 / path.len() as f64;
        assert!((frac - 0.25).abs() < 0.01);
    }

    #[test]
    fn exact_means() {
        let unif = ChainConfig::Doeblin {
            lambda: 0.5,
            base: BaseSampler::Uniform,
        };
        let clamp01 = FSpec::AffineClamp { a: 0.0, b: 1.0 };
        assert_relative_eq!(exact_mean(&unif, &clamp01).unwrap().unwrap(), 0.5, epsilon = 1e-15);
        // E clamp(2U - 0.5) on [0.25, 0.75] plus mass 0.25 at one
        let half = FSpec::AffineClamp { a: 0.25, b: 0.75 };
        assert_relative_eq!(exact_mean(&unif, &half).unwrap().unwrap(), 0.5, epsilon = 1e-15);
        let ar = ChainConfig::Ar1 { rho: 0.5 };
        assert_relative_eq!(exact_mean(&ar, &FSpec::IndicatorPositive).unwrap().unwrap(), 0.5, epsilon = 1e-15);
        // symmetric window around zero
        let sym = FSpec::AffineClamp { a: -1.0, b: 1.0 };
        assert_relative_eq!(exact_mean(&ar, &sym).unwrap().unwrap(), 0.5, epsilon = 1e-12);
        let expo = ChainConfig::Doeblin {
            lambda: 0.0,
            base: BaseSampler::Exponential,
        };
        // E min(X, 1) = 1 - e^{-1}
        assert_relative_eq!(
            exact_mean(&expo, &clamp01).unwrap().unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-15
        );
        let beta = ChainConfig::Doeblin {
            lambda: 0.0,
            base: BaseSampler::Beta { a: 2.0, b: 3.0 },
        };
        assert_eq!(exact_mean(&beta, &clamp01).unwrap(), None);
    }

    #[test]
    fn normal_clamp_mean_against_quadrature() {
        let (a, b) = (-0.3, 1.7);
        let f = FSpec::AffineClamp { a, b };
        let exact = exact_mean(&ChainConfig::Ar1 { rho: 0.2 }, &f).unwrap().unwrap();
        let normal = Normal::standard();
        let h = 1e-4;
        let mut acc = 0.0;
        let mut x = -10.0;
        while x < 10.0 {
            let mid = x + 0.5 * h;
            acc += f.eval(mid) * normal.pdf(mid) * h;
            x += h;
        }
        assert_relative_eq!(exact, acc, epsilon = 1e-8);
    }

    #[test]
    fn f_validation() {
        let fin = ChainConfig::Finite {
            p: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        assert!(FSpec::IndicatorPositive.validate_for(&fin).is_err());
        assert!(FSpec::Vector { values: vec![0.0] }.validate_for(&fin).is_err());
        assert!(FSpec::Vector { values: vec![0.0, 1.5] }.validate_for(&fin).is_err());
        assert!(FSpec::Vector { values: vec![0.0, 1.0] }.validate_for(&fin).is_ok());
        let ar = ChainConfig::Ar1 { rho: 0.1 };
        assert!(FSpec::AffineClamp { a: 1.0, b: 1.0 }.validate_for(&ar).is_err());
    }

    #[test]
    fn unknown_sampler_id() {
        assert!(BaseSampler::from_id("cauchy").is_err());
        assert_eq!(BaseSampler::from_id("uniform").unwrap(), BaseSampler::Uniform);
        let bad = r#"{"type": "doeblin", "lambda": 0.5, "base": {"kind": "cauchy"}}"#;
        assert!(serde_json::from_str::<ChainConfig>(bad).is_err());
    }
}
