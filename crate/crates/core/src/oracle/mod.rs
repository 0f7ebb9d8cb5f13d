//! Exact small-instance computations: moment generating functions, the distribution of
//! `S_n` by dynamic programming, and the two-state reference chain.
//!
//! Conventions: `S_n = f(X_1) + ... + f(X_n)` with `X_1` drawn from the start law; the
//! deviation event `S_n >= n(mu + eps)` is closed.

mod suites;
mod verify;

pub use suites::{random_grid_f, random_kernel, run_suite, InstanceFailure, Suite, SuiteOutcome};
pub use verify::{
    convex_domination_check, density_norm, instance_digest, verify_corollary, verify_lemma_glowny,
    verify_lemma_l1, verify_theorem2, CheckRecord, ConvexTestFunction, CorollaryReport, DominationReport,
    DominationRow, GlownyReport, L1Report, LadderPoint, NormExponent, Theorem2Report,
};

use serde::{Deserialize, Serialize};

use crate::bounds::{ChainParams, TwoStateMatrix};
use crate::error::{Error, Result};
use crate::spectral::{FiniteKernel, StationaryDist};

/// Upper limit on `states * (n k + 1)` for the tail DP.
pub const MAX_DP_CELLS: usize = 10_000_000;

const GRID_SNAP: f64 = 1e-9;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `log E exp(t S_n)` for the chain started from `pi`.
///
/// Runs `v <- e^{t f} . (P v)` from `v = 1` for `n` rounds and returns `log(pi . v)`,
/// renormalising `v` each round so the log is carried separately.
pub fn exact_log_mgf(kernel: &FiniteKernel, pi: &StationaryDist, t: f64, n: u64) -> Result<f64> {
    let size = kernel.n_states();
    if pi.len() != size {
        return Err(Error::invalid("pi length does not match kernel"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if !t.is_finite() {
        return Err(Error::invalid(format!("t = {t} must be finite")));
    }
    let p = kernel.matrix();
    let tilt: Vec<f64> = kernel.f().iter().map(|v| (t * v).exp()).collect();
    let mut v = vec![1.0; size];
    let mut log_scale = 0.0;
    let mut next = vec![0.0; size];
    for _ in 0..n {
        for i in 0..size {
            let pv: f64 = (0..size).map(|j| p[(i, j)] * v[j]).sum();
            next[i] = tilt[i] * pv;
        }
        let m = next.iter().copied().fold(0.0, f64::max);
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::numerical("exact mgf", format!("scale factor {m}")));
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / m;
        }
        log_scale += m.ln();
    }
    let dot: f64 = pi.as_slice().iter().zip(&v).map(|(a, b)| a * b).sum();
    Ok(log_scale + dot.ln())
}

/// `E_pi exp(t S_n)`.
pub fn exact_mgf(kernel: &FiniteKernel, pi: &StationaryDist, t: f64, n: u64) -> Result<f64> {
    exact_log_mgf(kernel, pi, t, n).map(f64::exp)
}

/// Law of `S_n` on the grid `{0, 1/k, ..., n}`: `masses[s] = P(S_n = s/k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumDistribution {
    pub k: u32,
    pub n: u64,
    pub masses: Vec<f64>,
}

impl SumDistribution {
    pub fn total(&self) -> f64 {
        self.tail(0)
    }

    /// `P(S_n >= s/k)`.
    pub fn tail(&self, s: usize) -> f64 {
        let mut acc = CompensatedSum::default();
        for &m in self.masses.iter().skip(s) {
            acc.add(m);
        }
        acc.value()
    }

    /// `E G(S_n)`.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        let k = self.k as f64;
        let mut acc = CompensatedSum::default();
        for (s, &m) in self.masses.iter().enumerate() {
            if m > 0.0 {
                acc.add(m * g(s as f64 / k));
            }
        }
        acc.value()
    }

    pub fn mgf(&self, t: f64) -> f64 {
        self.expectation(|x| (t * x).exp())
    }
}

/// Integer grid positions `k f_i`, or a grid-mismatch error.
pub fn grid_indices(f: &[f64], k: u32) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("grid resolution k must be >= 1"));
    }
    let kf = k as f64;
    f.iter()
        .enumerate()
        .map(|(i, &v)| {
            let y = v * kf;
            let r = y.round();
            if (y - r).abs() <= GRID_SNAP && r >= 0.0 {
                Ok(r as usize)
            } else {
                Err(Error::GridMismatch { state: i, value: v, k })
            }
        })
        .collect()
}

/// Smallest grid index `s` with `s/k >= n * level`; exact grid hits are snapped.
pub fn threshold_index(n: u64, level: f64, k: u32) -> usize {
    let x = n as f64 * level * k as f64;
    let r = x.round();
    if (x - r).abs() <= GRID_SNAP * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Dynamic program over (step, state, sum index) for the chain started from `initial`.
pub fn sum_distribution(kernel: &FiniteKernel, initial: &[f64], n: u64, k: u32) -> Result<SumDistribution> {
    let size = kernel.n_states();
    if initial.len() != size {
        return Err(Error::invalid(format!(
            "start distribution has {} entries, kernel has {size} states",
            initial.len()
        )));
    }
    if let Some((i, &v)) = initial.iter().enumerate().find(|(_, &v)| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("start distribution entry {i} = {v}")));
    }
    let total: f64 = initial.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("start distribution sums to {total}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let cost = grid_indices(kernel.f(), k)?;
    let width = (n as usize)
        .checked_mul(k as usize)
        .and_then(|v| v.checked_add(1))
        .ok_or_else(|| Error::invalid("DP grid too large"))?;
    if width.saturating_mul(size) > MAX_DP_CELLS {
        return Err(Error::invalid(format!(
            "DP needs {} cells, cap is {MAX_DP_CELLS}",
            width.saturating_mul(size)
        )));
    }
    let p = kernel.matrix();
    let mut dist = vec![0.0; size * width];
    for i in 0..size {
        dist[i * width + cost[i]] = initial[i];
    }
    let mut next = vec![0.0; size * width];
    let kk = k as usize;
    for step in 1..n as usize {
        // sums after `step` draws occupy indices 0..=step*k
        let reach = step * kk;
        next.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..size {
            let shift = cost[j];
            for s in 0..=reach {
                let mut acc = CompensatedSum::default();
                for i in 0..size {
                    let m = dist[i * width + s];
                    if m != 0.0 {
                        acc.add(m * p[(i, j)]);
                    }
                }
                next[j * width + s + shift] = acc.value();
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    let mut masses = vec![0.0; width];
    for (s, slot) in masses.iter_mut().enumerate() {
        let mut acc = CompensatedSum::default();
        for i in 0..size {
            acc.add(dist[i * width + s]);
        }
        *slot = acc.value();
    }
    Ok(SumDistribution { k, n, masses })
}

/// `P_pi(S_n >= s/k)`.
pub fn exact_tail(kernel: &FiniteKernel, pi: &StationaryDist, n: u64, threshold: usize, k: u32) -> Result<f64> {
    Ok(sum_distribution(kernel, pi.as_slice(), n, k)?.tail(threshold))
}

/// The two-state chain `M_{mu,lambda}` with `f = (0, 1)`.
pub fn two_state_kernel(params: &ChainParams) -> Result<FiniteKernel> {
    FiniteKernel::new(TwoStateMatrix::new(*params).rows(), vec![0.0, 1.0])
}

/// `log (m' D_t (M D_t)^{n-1} 1)` with `D_t = diag(1, e^t)` and `m = (mu_bar, mu)`.
pub fn two_state_log_mgf(params: &ChainParams, t: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let m = TwoStateMatrix::new(*params).entries;
    let et = t.exp();
    let mut row = [params.mu_bar(), params.mu() * et];
    let mut log_scale = 0.0;
    for _ in 1..n {
        let a = row[0] * m[0][0] + row[1] * m[1][0];
        let b = (row[0] * m[0][1] + row[1] * m[1][1]) * et;
        let s = a.max(b);
        row = [a / s, b / s];
        log_scale += s.ln();
    }
    Ok(log_scale + (row[0] + row[1]).ln())
}

pub fn two_state_mgf(params: &ChainParams, t: f64, n: u64) -> Result<f64> {
    two_state_log_mgf(params, t, n).map(f64::exp)
}

/// Law of `Y_1 + ... + Y_n` for the stationary two-state chain.
pub fn two_state_distribution(params: &ChainParams, n: u64) -> Result<SumDistribution> {
    let k = two_state_kernel(params)?;
    sum_distribution(&k, &[params.mu_bar(), params.mu()], n, 1)
}

/// `P_mu(Y_1 + ... + Y_n >= n (mu + eps))`.
pub fn two_state_tail(params: &ChainParams, n: u64, epsilon: f64) -> Result<f64> {
    let dist = two_state_distribution(params, n)?;
    Ok(dist.tail(threshold_index(n, params.mu() + epsilon, 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{doeblin_kernel, stationary};
    use approx::assert_relative_eq;

    fn three_state() -> FiniteKernel {
        FiniteKernel::new(
            vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.25, 0.25, 0.5]],
            vec![0.0, 0.5, 1.0],
        )
        .unwrap()
    }

    /// Path-enumeration oracle for `E_pi exp(t S_n)`.
    fn brute_force_mgf(k: &FiniteKernel, pi: &[f64], t: f64, n: usize) -> f64 {
        let size = k.n_states();
        let p = k.matrix();
        let f = k.f();
        let mut total = 0.0;
        let paths = size.pow(n as u32);
        for code in 0..paths {
            let mut c = code;
            let mut path = Vec::with_capacity(n);
            for _ in 0..n {
                path.push(c % size);
                c /= size;
            }
            let mut prob = pi[path[0]];
            for w in path.windows(2) {
                prob *= p[(w[0], w[1])];
            }
            let s: f64 = path.iter().map(|&x| f[x]).sum();
            total += prob * (t * s).exp();
        }
        total
    }

    fn binomial_tail(n: u64, mu: f64, s: u64) -> f64 {
        let mut total = 0.0;
        for j in s..=n {
            let lc = statrs::function::factorial::ln_binomial(n, j);
            total += (lc + j as f64 * mu.ln() + (n - j) as f64 * (1.0 - mu).ln()).exp();
        }
        total
    }

    #[test]
    fn mgf_single_state() {
        let k = FiniteKernel::new(vec![vec![1.0]], vec![0.3]).unwrap();
        let pi = stationary(&k).unwrap();
        assert_relative_eq!(exact_mgf(&k, &pi, 0.7, 5).unwrap(), (0.7f64 * 0.3 * 5.0).exp(), max_relative = 1e-14);
    }

    #[test]
    fn mgf_iid() {
        let pi = StationaryDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        let k = doeblin_kernel(&pi, 0.0, vec![0.1, 0.6, 0.9]).unwrap();
        let one: f64 = pi.as_slice().iter().zip(k.f()).map(|(p, v)| p * (1.3 * v).exp()).sum();
        assert_relative_eq!(exact_mgf(&k, &pi, 1.3, 7).unwrap(), one.powi(7), max_relative = 1e-13);
    }

    #[test]
    fn mgf_matches_path_enumeration() {
        let k = three_state();
        let pi = stationary(&k).unwrap();
        for &t in &[0.25, 1.0, -0.7] {
            let exact = exact_mgf(&k, &pi, t, 3).unwrap();
            let brute = brute_force_mgf(&k, pi.as_slice(), t, 3);
            assert!((exact - brute).abs() <= 1e-12 * brute.max(1.0), "{exact} vs {brute}");
        }
    }

    #[test]
    fn mgf_survives_large_exponents() {
        let k = three_state();
        let pi = stationary(&k).unwrap();
        let l = exact_log_mgf(&k, &pi, 50.0, 100).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn tail_single_step() {
        let k = three_state();
        let pi = stationary(&k).unwrap();
        let w = pi.as_slice();
        assert_relative_eq!(exact_tail(&k, &pi, 1, 1, 2).unwrap(), w[1] + w[2], max_relative = 1e-14);
        assert_relative_eq!(exact_tail(&k, &pi, 1, 2, 2).unwrap(), w[2], max_relative = 1e-14);
        assert_relative_eq!(exact_tail(&k, &pi, 1, 0, 2).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn tail_iid_is_binomial() {
        let mu = 0.3;
        let params = ChainParams::new(mu, 0.0).unwrap();
        let k = two_state_kernel(&params).unwrap();
        let pi = StationaryDist::new(vec![0.7, 0.3]).unwrap();
        for &(n, s) in &[(10u64, 5u64), (50, 20), (200, 90)] {
            let exact = exact_tail(&k, &pi, n, s as usize, 1).unwrap();
            assert_relative_eq!(exact, binomial_tail(n, mu, s), max_relative = 1e-10);
        }
    }

    #[test]
    fn distribution_reweights_to_mgf() {
        let k = three_state();
        let pi = stationary(&k).unwrap();
        let dist = sum_distribution(&k, pi.as_slice(), 9, 2).unwrap();
        assert!((dist.total() - 1.0).abs() <= 1e-12);
        for &t in &[0.5, 1.0, 2.0] {
            let via_dp = dist.mgf(t);
            let direct = exact_mgf(&k, &pi, t, 9).unwrap();
            assert!((via_dp - direct).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn rational_spot_check() {
        // N = 2, n = 10, k = 1 with dyadic entries: every DP quantity is an exact binary
        // fraction, so the result must match integer arithmetic exactly.
        let k = FiniteKernel::new(vec![vec![0.75, 0.25], vec![0.5, 0.5]], vec![0.0, 1.0]).unwrap();
        let pi = StationaryDist::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        // start from the dyadic law (1/2, 1/2) to keep the arithmetic exact
        let dist = sum_distribution(&k, &[0.5, 0.5], 10, 1).unwrap();
        // integer DP in units of 4^-9 * 2^-1
        let num = [[3u128, 1], [2, 2]];
        let mut d = vec![[0u128; 2]; 11];
        d[0][0] = 1;
        d[1][1] = 1;
        for _ in 1..10 {
            let mut nd = vec![[0u128; 2]; 11];
            for s in 0..11 {
                for i in 0..2 {
                    for j in 0..2 {
                        if d[s][i] > 0 {
                            nd[s + j][j] += d[s][i] * num[i][j];
                        }
                    }
                }
            }
            d = nd;
        }
        let denom = 2.0 * 4f64.powi(9);
        for s in 0..11 {
            let exact = (d[s][0] + d[s][1]) as f64 / denom;
            assert_eq!(dist.masses[s], exact, "mass at {s}");
        }
        assert!(exact_tail(&k, &pi, 10, 4, 1).unwrap() > 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let k = FiniteKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.0, 0.3]).unwrap();
        let pi = stationary(&k).unwrap();
        assert!(matches!(exact_tail(&k, &pi, 3, 1, 2), Err(Error::GridMismatch { state: 1, .. })));
        assert!(exact_tail(&k, &pi, 3, 1, 10).is_ok());
    }

    #[test]
    fn threshold_snapping() {
        assert_eq!(threshold_index(100, 0.6, 1), 60);
        assert_eq!(threshold_index(10, 0.61, 1), 7);
        assert_eq!(threshold_index(3, 0.1 + 0.2, 10), 9);
    }

    #[test]
    fn two_state_mgf_examples() {
        let t: f64 = 0.8;
        let params = ChainParams::new(0.3, 0.0).unwrap();
        assert_relative_eq!(
            two_state_mgf(&params, t, 12).unwrap(),
            (0.7 + 0.3 * t.exp()).powi(12),
            max_relative = 1e-13
        );
        for l in [0.0, 0.4, 0.9] {
            let params = ChainParams::new(0.3, l).unwrap();
            assert_relative_eq!(two_state_mgf(&params, t, 1).unwrap(), 0.7 + 0.3 * t.exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn two_state_mgf_agrees_with_kernel_route() {
        let params = ChainParams::new(0.35, 0.6).unwrap();
        let k = two_state_kernel(&params).unwrap();
        let pi = StationaryDist::new(vec![0.65, 0.35]).unwrap();
        for n in [1, 2, 7, 40] {
            let a = two_state_log_mgf(&params, 0.9, n).unwrap();
            let b = exact_log_mgf(&k, &pi, 0.9, n).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn two_state_growth_rate_approaches_theta() {
        let params = ChainParams::new(0.5, 0.5).unwrap();
        let rate = two_state_log_mgf(&params, 1.0, 200).unwrap() / 200.0;
        let lt = crate::bounds::log_theta(&params, 1.0);
        assert!((rate - lt).abs() < 0.01, "{rate} vs {lt}");
    }
}
