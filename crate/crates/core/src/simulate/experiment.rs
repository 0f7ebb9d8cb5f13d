use std::fs::OpenOptions;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};

use super::{exact_mean, BaseSampler, ChainConfig, FSpec, PreparedChain};
use crate::bounds::{upper_tail_bound, BoundForm, ChainParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{spectral_norm_gap, stationary, FiniteKernel};

/// Confidence level of every interval reported here.
pub const CI_LEVEL: f64 = 0.99;
/// Draws used to estimate `mu` when it has no closed form.
const MU_SAMPLES: u64 = 1_000_000;
/// Stream reserved for the `mu` estimate, disjoint from replicate streams.
const MU_STREAM: u64 = u64::MAX;
const HIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailExperiment {
    pub chain: ChainConfig,
    pub f_spec: FSpec,
    pub n: u64,
    pub epsilon: f64,
    pub replicates: u64,
    pub seed: u64,
    /// Estimate `mu` by sampling when no closed form is available.
    #[serde(default)]
    pub estimate_mu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub chain: String,
    pub f_spec: String,
    pub n: u64,
    pub epsilon: f64,
    pub mu: f64,
    pub mu_estimated: bool,
    pub mu_ci: Option<(f64, f64)>,
    pub lambda: f64,
    /// Where `lambda` came from: `spectral_norm_gap`, `construction`, or `ar1_abs_rho`.
    pub lambda_source: String,
    pub replicates: u64,
    pub seed: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub log_bound_sharp: f64,
    pub log_bound_loose: f64,
    pub bound_sharp: f64,
    pub bound_loose: f64,
    pub violation: bool,
    pub warnings: Vec<String>,
}

/// Exact binomial interval for `hits` successes out of `trials` at level `level`.
pub fn clopper_pearson(hits: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || hits > trials {
        return Err(Error::invalid(format!("{hits} hits out of {trials} trials")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} must lie in (0, 1)")));
    }
    let alpha = 1.0 - level;
    let (x, n) = (hits as f64, trials as f64);
    let low = if hits == 0 {
        0.0
    } else {
        beta_quantile(x, n - x + 1.0, alpha / 2.0)
    };
    let high = if hits == trials {
        1.0
    } else {
        beta_quantile(x + 1.0, n - x, 1.0 - alpha / 2.0)
    };
    Ok((low, high))
}

/// `inv_beta_reg` polished by Newton steps on the regularised incomplete beta function.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let log_norm = ln_beta(a, b);
    let mut p = inv_beta_reg(a, b, target);
    for _ in 0..8 {
        let g = beta_reg(a, b, p) - target;
        let density = ((a - 1.0) * p.ln() + (b - 1.0) * (-p).ln_1p() - log_norm).exp();
        if !(density > 0.0 && density.is_finite()) {
            break;
        }
        let next = (p - g / density).clamp(0.5 * p, 0.5 * (1.0 + p));
        if (next - p).abs() <= 1e-15 * p {
            p = next;
            break;
        }
        p = next;
    }
    p
}

fn lambda_for(chain: &ChainConfig) -> Result<(f64, &'static str)> {
    match chain {
        ChainConfig::Finite { p } => {
            let kernel = FiniteKernel::new(p.clone(), vec![0.0; p.len()])?;
            let pi = stationary(&kernel)?;
            let gap = spectral_norm_gap(&kernel, &pi)?;
            if gap.assumption_violated {
                return Err(Error::AssumptionViolated { lambda: gap.lambda });
            }
            Ok((gap.lambda, "spectral_norm_gap"))
        }
        ChainConfig::Doeblin { lambda, .. } => Ok((*lambda, "construction")),
        ChainConfig::Ar1 { rho } => Ok((rho.abs(), "ar1_abs_rho")),
    }
}

/// Sample mean of `f` over i.i.d. draws from the stationary law, with a normal 99% interval.
fn estimate_mean(chain: &ChainConfig, f: &FSpec, seed: u64) -> Result<(f64, (f64, f64))> {
    // the Doeblin stationary law is the base law, so i.i.d. draws are a lambda = 0 path
    let iid = match chain {
        ChainConfig::Doeblin { base, .. } => ChainConfig::Doeblin {
            lambda: 0.0,
            base: base.clone(),
        },
        _ => return Err(Error::invalid("mu estimation is only needed for Doeblin chains")),
    };
    let prepared = PreparedChain::new(&iid)?;
    let mut rng = rng::stream(seed, MU_STREAM);
    let mut path = Vec::with_capacity(MU_SAMPLES as usize);
    prepared.fill_path(&mut rng, MU_SAMPLES as usize, &mut path);
    let m = MU_SAMPLES as f64;
    let values: Vec<f64> = path.iter().map(|&x| f.eval(x)).collect();
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let z = statrs::distribution::ContinuousCDF::inverse_cdf(
        &statrs::distribution::Normal::standard(),
        0.5 + CI_LEVEL / 2.0,
    );
    let half = z * (var / m).sqrt();
    Ok((mean, ((mean - half).max(0.0), (mean + half).min(1.0))))
}

/// Runs `replicates` independent stationary paths and compares the hit rate of
/// `S_n >= n(mu + epsilon)` with the sharp and loose bounds.
///
/// `violation` is set when the lower end of the 99% interval exceeds the sharp bound.
pub fn run_tail_experiment(exp: &TailExperiment) -> Result<TailResult> {
    if exp.replicates == 0 {
        return Err(Error::invalid("replicates must be >= 1"));
    }
    if exp.n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if !(exp.epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon = {} must be > 0", exp.epsilon)));
    }
    exp.f_spec.validate_for(&exp.chain)?;
    let prepared = PreparedChain::new(&exp.chain)?;
    let (lambda, lambda_source) = lambda_for(&exp.chain)?;
    let mut warnings = Vec::new();
    if lambda_source == "ar1_abs_rho" {
        warnings.push("lambda = |rho| is the known L2 norm of the AR(1) operator on mean-zero functions".into());
    }
    let (mu, mu_estimated, mu_ci) = match exact_mean(&exp.chain, &exp.f_spec)? {
        Some(mu) => (mu, false, None),
        None if exp.estimate_mu => {
            let (mu, ci) = estimate_mean(&exp.chain, &exp.f_spec, exp.seed)?;
            warnings.push(format!(
                "mu has no closed form; estimated from {MU_SAMPLES} draws, 99% CI [{:.6}, {:.6}]",
                ci.0, ci.1
            ));
            (mu, true, Some(ci))
        }
        None => {
            return Err(Error::invalid(format!(
                "mean of {} under {} has no closed form; pass the estimate-mu option",
                exp.f_spec.label(),
                exp.chain.label()
            )))
        }
    };
    let params = ChainParams::new(mu, lambda)?;
    let log_bound_sharp = upper_tail_bound(&params, exp.epsilon, exp.n, BoundForm::Sharp)?;
    let log_bound_loose = upper_tail_bound(&params, exp.epsilon, exp.n, BoundForm::Loose)?;

    let n = exp.n as usize;
    let threshold = exp.n as f64 * (mu + exp.epsilon) - HIT_SLACK;
    let hits: u64 = (0..exp.replicates)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |path, index| {
                let mut r = rng::stream(exp.seed, index);
                prepared.fill_path(&mut r, n, path);
                let s: f64 = path.iter().map(|&x| exp.f_spec.eval(x)).sum();
                u64::from(s >= threshold)
            },
        )
        .sum();
    let p_hat = hits as f64 / exp.replicates as f64;
    let (ci_low, ci_high) = clopper_pearson(hits, exp.replicates, CI_LEVEL)?;
    let bound_sharp = log_bound_sharp.exp();
    Ok(TailResult {
        chain: exp.chain.label(),
        f_spec: exp.f_spec.label(),
        n: exp.n,
        epsilon: exp.epsilon,
        mu,
        mu_estimated,
        mu_ci,
        lambda,
        lambda_source: lambda_source.into(),
        replicates: exp.replicates,
        seed: exp.seed,
        hits,
        p_hat,
        ci_low,
        ci_high,
        log_bound_sharp,
        log_bound_loose,
        bound_sharp,
        bound_loose: log_bound_loose.exp(),
        violation: ci_low > bound_sharp,
        warnings,
    })
}

/// The fixed experiment matrix: each chain crossed with three `(epsilon, n)` pairs.
pub fn shipped_experiments(replicates: u64, seed: u64) -> Vec<TailExperiment> {
    let unit = FSpec::AffineClamp { a: 0.0, b: 1.0 };
    let chains: Vec<(ChainConfig, FSpec)> = vec![
        (
            ChainConfig::Finite {
                p: vec![vec![0.75, 0.25], vec![0.25, 0.75]],
            },
            FSpec::Vector { values: vec![0.0, 1.0] },
        ),
        (
            ChainConfig::Doeblin {
                lambda: 0.0,
                base: BaseSampler::Uniform,
            },
            unit.clone(),
        ),
        (
            ChainConfig::Doeblin {
                lambda: 0.5,
                base: BaseSampler::Uniform,
            },
            unit,
        ),
        (ChainConfig::Ar1 { rho: 0.5 }, FSpec::IndicatorPositive),
    ];
    let mut out = Vec::new();
    for (chain, f_spec) in chains {
        for (epsilon, n) in [(0.05, 100), (0.1, 100), (0.1, 200)] {
            out.push(TailExperiment {
                chain: chain.clone(),
                f_spec: f_spec.clone(),
                n,
                epsilon,
                replicates,
                seed,
                estimate_mu: false,
            });
        }
    }
    out
}

/// One CSV line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub chain: String,
    pub f_spec: String,
    pub n: u64,
    pub eps: f64,
    pub mu: f64,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub r: u64,
    pub seed: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound_sharp: f64,
    pub bound_loose: f64,
    pub violation: bool,
}

impl From<&TailResult> for CsvRow {
    fn from(t: &TailResult) -> Self {
        Self {
            chain: t.chain.clone(),
            f_spec: t.f_spec.clone(),
            n: t.n,
            eps: t.epsilon,
            mu: t.mu,
            lambda: t.lambda,
            r: t.replicates,
            seed: t.seed,
            p_hat: t.p_hat,
            ci_low: t.ci_low,
            ci_high: t.ci_high,
            bound_sharp: t.bound_sharp,
            bound_loose: t.bound_loose,
            violation: t.violation,
        }
    }
}

/// Appends rows to `path`, writing the header first if the file is new or empty.
pub fn append_csv(path: &Path, results: &[TailResult]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in results {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 1000, 0.99).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 1.0 - 0.005f64.powf(1.0 / 1000.0), max_relative = 1e-8);
        let (lo, hi) = clopper_pearson(1000, 1000, 0.99).unwrap();
        assert_eq!(hi, 1.0);
        assert_relative_eq!(lo, 0.005f64.powf(1.0 / 1000.0), max_relative = 1e-8);
        assert!(clopper_pearson(3, 2, 0.99).is_err());
    }

    #[test]
    fn clopper_pearson_inverts_binomial_tails() {
        for &(x, n) in &[(1u64, 20u64), (37, 100), (5, 100_000)] {
            let (lo, hi) = clopper_pearson(x, n, 0.99).unwrap();
            let p_hat = x as f64 / n as f64;
            assert!(lo <= p_hat && p_hat <= hi);
            // P(Bin(n, lo) >= x) = 0.005 and P(Bin(n, hi) <= x) = 0.005
            let (xf, nf) = (x as f64, n as f64);
            assert_relative_eq!(beta_reg(xf, nf - xf + 1.0, lo), 0.005, max_relative = 1e-9);
            assert_relative_eq!(1.0 - beta_reg(xf + 1.0, nf - xf, hi), 0.005, max_relative = 1e-9);
        }
    }

    fn small(chain: ChainConfig, f_spec: FSpec) -> TailExperiment {
        TailExperiment {
            chain,
            f_spec,
            n: 50,
            epsilon: 0.1,
            replicates: 5_000,
            seed: 42,
            estimate_mu: false,
        }
    }

    #[test]
    fn result_is_deterministic_and_consistent() {
        let exp = small(
            ChainConfig::Finite {
                p: vec![vec![0.75, 0.25], vec![0.25, 0.75]],
            },
            FSpec::Vector { values: vec![0.0, 1.0] },
        );
        let a = run_tail_experiment(&exp).unwrap();
        let b = run_tail_experiment(&exp).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.p_hat && a.p_hat <= a.ci_high);
        assert_relative_eq!(a.lambda, 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.mu, 0.5, epsilon = 1e-12);
        assert!(!a.violation);
    }

    #[test]
    fn iid_is_below_classic_hoeffding() {
        let exp = small(
            ChainConfig::Doeblin {
                lambda: 0.0,
                base: BaseSampler::Uniform,
            },
            FSpec::AffineClamp { a: 0.0, b: 1.0 },
        );
        let r = run_tail_experiment(&exp).unwrap();
        assert_relative_eq!(r.bound_loose, (-2.0f64 * 0.01 * 50.0).exp(), max_relative = 1e-12);
        assert!(r.p_hat < r.bound_loose);
    }

    #[test]
    fn non_computable_mean_needs_flag() {
        let mut exp = small(
            ChainConfig::Doeblin {
                lambda: 0.3,
                base: BaseSampler::Beta { a: 2.0, b: 2.0 },
            },
            FSpec::AffineClamp { a: 0.0, b: 1.0 },
        );
        let err = run_tail_experiment(&exp).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Validation);
        exp.estimate_mu = true;
        let r = run_tail_experiment(&exp).unwrap();
        assert!(r.mu_estimated);
        let (lo, hi) = r.mu_ci.unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi, "Beta(2,2) mean outside [{lo}, {hi}]");
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn shipped_matrix_shape() {
        let m = shipped_experiments(10, 1);
        assert_eq!(m.len(), 12);
        for e in &m {
            assert!(exact_mean(&e.chain, &e.f_spec).unwrap().is_some());
        }
    }

    #[test]
    fn csv_appends_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let exp = TailExperiment {
            replicates: 100,
            ..small(ChainConfig::Ar1 { rho: 0.5 }, FSpec::IndicatorPositive)
        };
        let r = run_tail_experiment(&exp).unwrap();
        append_csv(&path, &[r.clone()]).unwrap();
        append_csv(&path, &[r]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "chain,f_spec,n,eps,mu,lambda,R,seed,p_hat,ci_low,ci_high,bound_sharp,bound_loose,violation"
        );
    }
}
