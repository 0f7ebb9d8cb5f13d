use serde::{Deserialize, Serialize};

use super::{check_upper_eps, dlog_theta, log_theta, ChainParams};
use crate::error::{Error, Result};

const T_TOLERANCE: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: usize = 64;
const MAX_REFINE_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffOptimum {
    pub log_value: f64,
    pub t_star: f64,
}

/// `inf_{t > 0} n (log theta_t - t (mu + epsilon))`, found numerically.
///
/// `t -> log theta_t - t (mu + eps)` is strictly convex with slope `-eps` at zero, so the
/// minimiser is bracketed by doubling `T` until the slope turns positive and then located
/// by bisection on the slope to `1e-12` in `t`. At `epsilon = mu_bar` the slope never turns
/// and the bracket search gives up with a numerical error.
pub fn chernoff_log_bound(params: &ChainParams, epsilon: f64, n: u64) -> Result<ChernoffOptimum> {
    params.require_interior()?;
    if check_upper_eps(params, epsilon)? {
        return Err(Error::numerical(
            "chernoff minimisation",
            "epsilon = mu_bar: the infimum is only approached as t -> inf (bracket [0, inf))",
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let target = params.mu() + epsilon;
    let slope = |t: f64| dlog_theta(params, t) - target;
    let objective = |t: f64| log_theta(params, t) - t * target;

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while slope(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::numerical(
                "chernoff minimisation",
                format!("slope still negative at t = {hi} (bracket [{lo}, {hi}]); epsilon at the boundary?"),
            ));
        }
    }

    let mut iters = 0;
    while hi - lo > T_TOLERANCE * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > MAX_REFINE_ITERS {
            return Err(Error::numerical(
                "chernoff minimisation",
                format!("bisection did not converge, bracket [{lo}, {hi}]"),
            ));
        }
    }
    let t_star = 0.5 * (lo + hi);
    let value = objective(t_star).min(0.0);
    Ok(ChernoffOptimum {
        log_value: n as f64 * value,
        t_star,
    })
}
