use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::verify::{
    convex_domination_check, verify_corollary, verify_lemma_glowny, verify_lemma_l1, verify_theorem2, CheckRecord,
    ConvexTestFunction, NormExponent,
};
use super::two_state_kernel;
use crate::bounds::ChainParams;
use crate::error::{Error, ErrorClass, Result};
use crate::rng;
use crate::spectral::{spectral_norm_gap, stationary, FiniteKernel, StationaryDist};

const TILTS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const MAX_RANDOM_LAMBDA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    L1,
    Glowny,
    Mp1,
    Corollary,
    Theorem2,
    All,
}

impl Suite {
    pub const ALL_SUITES: [Suite; 5] = [Suite::L1, Suite::Glowny, Suite::Mp1, Suite::Corollary, Suite::Theorem2];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::L1 => "l1",
            Suite::Glowny => "glowny",
            Suite::Mp1 => "mp1",
            Suite::Corollary => "corollary",
            Suite::Theorem2 => "theorem2",
            Suite::All => "all",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Suite::L1 => 1,
            Suite::Glowny => 2,
            Suite::Mp1 => 3,
            Suite::Corollary => 4,
            Suite::Theorem2 => 5,
            Suite::All => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Suite::L1),
            "glowny" => Ok(Suite::Glowny),
            "mp1" => Ok(Suite::Mp1),
            "corollary" => Ok(Suite::Corollary),
            "theorem2" => Ok(Suite::Theorem2),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(format!(
                "unknown suite '{other}' (expected l1, glowny, mp1, corollary, theorem2 or all)"
            ))),
        }
    }
}

/// An instance that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub suite: Suite,
    pub instance: usize,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub records: Vec<CheckRecord>,
    pub failures: Vec<InstanceFailure>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> usize {
        self.records.iter().filter(|r| r.pass).count()
    }

    pub fn failed(&self) -> usize {
        self.records.len() - self.passed()
    }

    pub fn has_numerical_failure(&self) -> bool {
        self.failures.iter().any(|f| f.class == ErrorClass::Numerical)
    }
}

/// Runs `instances` random instances of `suite` (each sub-suite in turn for `All`).
///
/// Instance `i` of a suite draws from its own stream of `seed`, and results are collected in
/// instance order, so the outcome does not depend on the rayon pool size.
pub fn run_suite(suite: Suite, seed: u64, instances: usize) -> SuiteOutcome {
    let suites: Vec<Suite> = match suite {
        Suite::All => Suite::ALL_SUITES.to_vec(),
        s => vec![s],
    };
    let mut outcome = SuiteOutcome::default();
    for s in suites {
        let mut jobs: Vec<Job> = (0..instances).map(Job::Random).collect();
        if s == Suite::Theorem2 {
            jobs.extend((0..TWO_STATE_GRID.len()).map(Job::TwoState));
        }
        let results: Vec<(usize, Result<Vec<CheckRecord>>)> = jobs
            .par_iter()
            .map(|job| (job.index(instances), run_job(s, seed, *job)))
            .collect();
        for (index, result) in results {
            match result {
                Ok(records) => outcome.records.extend(records),
                Err(e) => outcome.failures.push(InstanceFailure {
                    suite: s,
                    instance: index,
                    class: e.class(),
                    message: e.to_string(),
                }),
            }
        }
    }
    outcome
}

const TWO_STATE_GRID: [(f64, f64); 9] = [
    (0.2, 0.0),
    (0.2, 0.5),
    (0.2, 0.9),
    (0.5, 0.0),
    (0.5, 0.5),
    (0.5, 0.9),
    (0.8, 0.0),
    (0.8, 0.5),
    (0.8, 0.9),
];

#[derive(Debug, Clone, Copy)]
enum Job {
    Random(usize),
    TwoState(usize),
}

impl Job {
    fn index(&self, instances: usize) -> usize {
        match *self {
            Job::Random(i) => i,
            Job::TwoState(i) => instances + i,
        }
    }
}

fn run_job(suite: Suite, seed: u64, job: Job) -> Result<Vec<CheckRecord>> {
    match job {
        Job::TwoState(i) => two_state_theorem2(i),
        Job::Random(i) => {
            let mut r = rng::stream(seed, (suite.tag() << 48) | i as u64);
            match suite {
                Suite::L1 => l1_instance(&mut r),
                Suite::Glowny => glowny_instance(&mut r, i),
                Suite::Mp1 => mp1_instance(&mut r),
                Suite::Corollary => corollary_instance(&mut r, i),
                Suite::Theorem2 => theorem2_instance(&mut r),
                Suite::All => unreachable!("expanded by run_suite"),
            }
        }
    }
}

fn exp_weights(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(Exp1) + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `k`-grid values with both 0 and 1 present, so the stationary mean is interior.
pub fn random_grid_f(r: &mut ChaCha8Rng, n: usize, k: u32) -> Vec<f64> {
    let mut f: Vec<f64> = (0..n).map(|_| r.random_range(0..=k) as f64 / k as f64).collect();
    if n >= 2 {
        f[0] = 0.0;
        f[1] = 1.0;
    }
    f
}

/// Sparse random kernel on `n` states with a Hamiltonian cycle for irreducibility, mixed
/// toward the uniform kernel until `||P - Pi||_{L2(pi)} < 0.999`.
pub fn random_kernel(r: &mut ChaCha8Rng, n: usize, f: Vec<f64>) -> Result<FiniteKernel> {
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for v in row.iter_mut() {
            if r.random::<f64>() < 0.5 {
                *v = r.sample::<f64, _>(Exp1);
            }
        }
        row[(i + 1) % n] += r.sample::<f64, _>(Exp1) + 0.05;
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let uniform = 1.0 / n as f64;
    for step in 0..=10 {
        let a = step as f64 / 10.0;
        let mixed: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().map(|v| (1.0 - a) * v + a * uniform).collect())
            .collect();
        let kernel = FiniteKernel::new(mixed, f.clone())?;
        let pi = stationary(&kernel)?;
        if spectral_norm_gap(&kernel, &pi)?.lambda < MAX_RANDOM_LAMBDA {
            return Ok(kernel);
        }
    }
    Err(Error::numerical("random kernel", "mixing failed to reach a spectral gap"))
}

fn l1_instance(r: &mut ChaCha8Rng) -> Result<Vec<CheckRecord>> {
    let n = r.random_range(2..=20);
    let f: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let kernel = random_kernel(r, n, f)?;
    let mut records = Vec::new();
    for t in TILTS {
        for steps in [1, 5, 20] {
            records.extend(verify_lemma_l1(&kernel, t, steps)?.records);
        }
    }
    Ok(records)
}

fn glowny_instance(r: &mut ChaCha8Rng, index: usize) -> Result<Vec<CheckRecord>> {
    let ladder: Vec<u64> = (0..7).map(|j| 1u64 << j).collect();
    if index == 0 {
        // two-level reference instance: r must equal the two-state theta_t
        let kernel = two_state_kernel(&ChainParams::new(0.5, 0.5)?)?;
        return Ok(verify_lemma_glowny(&kernel, 1.0, 1, &ladder)?.records);
    }
    let n = r.random_range(2..=50);
    let k = r.random_range(1..=8);
    let t = TILTS[r.random_range(0..TILTS.len())];
    let f: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let kernel = random_kernel(r, n, f)?;
    Ok(verify_lemma_glowny(&kernel, t, k, &ladder)?.records)
}

fn mp1_instance(r: &mut ChaCha8Rng) -> Result<Vec<CheckRecord>> {
    const K: u32 = 4;
    let n = r.random_range(2..=10);
    let pi = StationaryDist::new(exp_weights(r, n))?;
    let lambda = r.random_range(0.0..0.95);
    let f = random_grid_f(r, n, K);
    let steps = r.random_range(1..=20u64);
    let mu = pi.mean(&f);
    let tests = [
        ConvexTestFunction::ExpTilt(0.5),
        ConvexTestFunction::ExpTilt(1.0),
        ConvexTestFunction::Hinge(steps as f64 * mu),
    ];
    Ok(convex_domination_check(&pi, lambda, &f, steps, K, &tests)?.records)
}

fn corollary_instance(r: &mut ChaCha8Rng, index: usize) -> Result<Vec<CheckRecord>> {
    let n = r.random_range(2..=10);
    let k = [1u32, 2, 4][r.random_range(0..3)];
    let f = random_grid_f(r, n, k);
    let kernel = random_kernel(r, n, f)?;
    let nu = if r.random::<f64>() < 0.3 {
        let mut v = vec![0.0; n];
        v[r.random_range(0..n)] = 1.0;
        v
    } else {
        exp_weights(r, n)
    };
    let p = if index % 2 == 0 { NormExponent::Finite(2.0) } else { NormExponent::Infinity };
    let steps = r.random_range(1..=50u64);
    let pi = stationary(&kernel)?;
    let mu_bar = 1.0 - pi.mean(kernel.f());
    let eps = r.random_range(0.05..0.95) * mu_bar;
    Ok(verify_corollary(&kernel, &nu, p, eps, steps, k)?.records)
}

fn theorem2_instance(r: &mut ChaCha8Rng) -> Result<Vec<CheckRecord>> {
    let n = r.random_range(2..=10);
    let k = [1u32, 2, 4][r.random_range(0..3)];
    let f = random_grid_f(r, n, k);
    let kernel = random_kernel(r, n, f)?;
    let steps = r.random_range(1..=200u64);
    let pi = stationary(&kernel)?;
    let mu_bar = 1.0 - pi.mean(kernel.f());
    let mut records = Vec::new();
    for frac in [0.2, 0.5, 0.8] {
        records.extend(verify_theorem2(&kernel, frac * mu_bar, steps, k)?.records);
    }
    Ok(records)
}

fn two_state_theorem2(i: usize) -> Result<Vec<CheckRecord>> {
    let (mu, lambda) = TWO_STATE_GRID[i];
    let params = ChainParams::new(mu, lambda)?;
    let kernel = two_state_kernel(&params)?;
    let mut records = Vec::new();
    for steps in [1, 10, 50, 200] {
        for frac in [0.2, 0.5, 0.8] {
            records.extend(verify_theorem2(&kernel, frac * params.mu_bar(), steps, 1)?.records);
        }
    }
    Ok(records)
}
