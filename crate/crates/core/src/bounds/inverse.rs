use serde::{Deserialize, Serialize};

use super::{log_bound, BoundSpec, ChainParams, Tail};
use crate::error::{Error, Result};

const MAX_N: u64 = 1 << 53;

/// Smallest `n` with `bound(n) <= delta`.
///
/// Every supported bound is `c + n r` on the log scale except the two-sided union
/// bound, so the analytic guess `ceil((ln delta - c) / r)` is usually exact; it is then
/// confirmed by evaluating the bound at `n` and `n - 1`.
pub fn sample_size(params: &ChainParams, epsilon: f64, delta: f64, spec: &BoundSpec) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    let target = delta.ln();
    let at = |n: u64| log_bound(params, epsilon, n, spec);

    let first = at(1)?;
    let second = at(2)?;
    let per_step = second - first;
    if !(per_step < 0.0) {
        return Err(Error::UnreachableConfidence { per_step });
    }
    if first <= target {
        return Ok(1);
    }
    // For the affine forms intercept = first - per_step.
    let intercept = first - per_step;
    let guess = ((target - intercept) / per_step).ceil();
    if !guess.is_finite() || guess > MAX_N as f64 {
        return Err(Error::UnreachableConfidence { per_step });
    }
    let mut n = (guess as u64).max(2);

    // Walk up until the bound is met, then down while the predecessor still meets it.
    let mut steps = 0u32;
    while at(n)? > target {
        n = n.checked_mul(2).filter(|&v| v <= MAX_N).ok_or(Error::UnreachableConfidence { per_step })?;
        steps += 1;
        if steps > 64 {
            return Err(Error::UnreachableConfidence { per_step });
        }
    }
    // Largest n known to fail, smallest known to pass.
    let mut lo = 1u64;
    let mut hi = n;
    if n > 1 && at(n - 1)? > target {
        return Ok(n);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfWidth {
    pub epsilon: f64,
    /// Set when even the largest feasible deviation leaves the bound above `delta`.
    pub saturated: bool,
}

/// Deviation `epsilon` at which the bound equals `delta`, by bisection to `1e-12`.
pub fn half_width(params: &ChainParams, n: u64, delta: f64, spec: &BoundSpec) -> Result<HalfWidth> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let upper = match spec.tail {
        Tail::Upper => params.mu_bar(),
        Tail::Lower => params.mu(),
        Tail::TwoSided => params.mu().max(params.mu_bar()),
    };
    if upper <= 0.0 {
        return Err(Error::invalid("no feasible deviation: mean sits on the end of [0, 1]"));
    }
    let target = delta.ln();
    if log_bound(params, upper, n, spec)? > target {
        return Ok(HalfWidth {
            epsilon: upper,
            saturated: true,
        });
    }
    let mut lo = 0.0;
    let mut hi = upper;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if log_bound(params, mid, n, spec)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(HalfWidth {
        epsilon: 0.5 * (lo + hi),
        saturated: false,
    })
}

/// Closed-form inverse of the unbiased one-sided loose bound.
pub fn loose_half_width(lambda: f64, n: u64, delta: f64) -> f64 {
    ((1.0 / delta).ln() * (1.0 + lambda) / (2.0 * (1.0 - lambda) * n as f64)).sqrt()
}
