use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{exact_log_mgf, grid_indices, sum_distribution, threshold_index, two_state_kernel};
use crate::bounds::{self, BoundForm, ChainParams, InitialBias};
use crate::error::{Error, Result};
use crate::spectral::{
    discretize, doeblin_kernel, level_profile, self_adjoint_op_norm, solve_r, spectral_norm_gap, stationary,
    tilted_operator, FiniteKernel, Resolution, StationaryDist, TiltBase,
};

/// Relative slack on every `lhs <= rhs` comparison between exact quantities.
pub const REL_TOL: f64 = 1e-10;
/// Largest allowed `|r - ||Q^_{t,k}|||`.
pub const EIGEN_TOL: f64 = 1e-9;
const LADDER_SLACK: f64 = 1e-12;

/// One verified inequality: `pass` records whether `lhs <= rhs` up to the stated slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub instance_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// `lhs <= rhs (1 + rel)`, for non-negative right-hand sides.
    pub fn leq(check: impl Into<String>, digest: &str, lhs: f64, rhs: f64, rel: f64) -> Self {
        Self {
            check: check.into(),
            instance_digest: digest.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + rel * rhs.abs(),
        }
    }

    /// `lhs <= rhs + abs`.
    pub fn leq_abs(check: impl Into<String>, digest: &str, lhs: f64, rhs: f64, abs: f64) -> Self {
        Self {
            check: check.into(),
            instance_digest: digest.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + abs,
        }
    }
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form of `instance`.
pub fn instance_digest<T: Serialize>(instance: &T) -> String {
    let bytes = serde_json::to_vec(instance).expect("instance serialises");
    let full = hex::encode(Sha256::digest(&bytes));
    full[..16].to_string()
}

fn kernel_digest(kernel: &FiniteKernel, extra: serde_json::Value) -> String {
    instance_digest(&serde_json::json!({
        "P": kernel.rows(),
        "f": kernel.f(),
        "extra": extra,
    }))
}

fn gap_below_one(kernel: &FiniteKernel, pi: &StationaryDist) -> Result<f64> {
    let gap = spectral_norm_gap(kernel, pi)?;
    if gap.assumption_violated {
        return Err(Error::AssumptionViolated { lambda: gap.lambda });
    }
    Ok(gap.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub lambda: f64,
    pub mgf: f64,
    pub p_norm: f64,
    pub q_norm: f64,
    pub records: Vec<CheckRecord>,
}

/// `E_pi e^{t S_n} <= ||Q^_t||^n` and `||P^_t|| <= ||Q^_t||` for `Q` the Doeblin chain at the
/// kernel's own `lambda`.
pub fn verify_lemma_l1(kernel: &FiniteKernel, t: f64, n: u64) -> Result<L1Report> {
    let pi = stationary(kernel)?;
    let lambda = gap_below_one(kernel, &pi)?;
    let q = doeblin_kernel(&pi, lambda, kernel.f().to_vec())?;
    let p_norm = tilted_operator(kernel, TiltBase::P, t).norm(&pi)?;
    let q_norm = tilted_operator(&q, TiltBase::Q, t).norm(&pi)?;
    let mgf = exact_log_mgf(kernel, &pi, t, n)?.exp();
    let digest = kernel_digest(kernel, serde_json::json!({"t": t, "n": n}));
    let records = vec![
        CheckRecord::leq("l1.mgf", &digest, mgf, q_norm.powi(n as i32), REL_TOL),
        CheckRecord::leq("l1.norm", &digest, p_norm, q_norm, REL_TOL),
    ];
    Ok(L1Report {
        lambda,
        mgf,
        p_norm,
        q_norm,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub n: u64,
    pub a_n: f64,
    /// `|a_n - log r|`
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlownyReport {
    pub lambda: f64,
    pub r: f64,
    pub q_norm: f64,
    pub ladder: Vec<LadderPoint>,
    pub records: Vec<CheckRecord>,
}

/// Both parts of the eigenvalue lemma for the discretised Doeblin chain.
///
/// Part (i) compares the root of the profile equation with the operator norm of `Q^_{t,k}`.
/// Part (ii) follows `a_n = (1/n) log E_pi exp(t sum f_k(X'_i))` along `n_ladder`: each `a_n`
/// must sit below `log r`, and the gap must not grow from one ladder entry to the next.
/// When `f_k` takes exactly the values 0 and 1, `r` is also compared with the two-state `theta_t`.
pub fn verify_lemma_glowny(kernel: &FiniteKernel, t: f64, k: u32, n_ladder: &[u64]) -> Result<GlownyReport> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if t < 0.0 {
        return Err(Error::invalid(format!("t = {t} must be >= 0")));
    }
    let pi = stationary(kernel)?;
    let lambda = gap_below_one(kernel, &pi)?;
    let fk = discretize(kernel.f(), k);
    let q = doeblin_kernel(&pi, lambda, fk)?;
    let profile = level_profile(&q, &pi, Resolution::Exact)?;
    let r = solve_r(&profile, lambda, t)?;
    let q_norm = self_adjoint_op_norm(&tilted_operator(&q, TiltBase::Q, t).matrix, &pi)?;
    let digest = kernel_digest(kernel, serde_json::json!({"t": t, "k": k}));

    let mut records = vec![CheckRecord::leq_abs("glowny.i", &digest, (r - q_norm).abs(), EIGEN_TOL, 0.0)];
    if profile.levels() == [0.0, 1.0] {
        let params = ChainParams::new(profile.weights()[1], lambda)?;
        let th = bounds::theta(&params, t);
        records.push(CheckRecord::leq_abs("glowny.theta", &digest, (r - th).abs(), EIGEN_TOL, 0.0));
    }

    let log_r = r.ln();
    let mut ladder = Vec::with_capacity(n_ladder.len());
    for &n in n_ladder {
        let a_n = exact_log_mgf(&q, &pi, t, n)? / n as f64;
        ladder.push(LadderPoint {
            n,
            a_n,
            gap: (a_n - log_r).abs(),
        });
    }
    for p in &ladder {
        records.push(CheckRecord::leq_abs("glowny.ii.upper", &digest, p.a_n, log_r, LADDER_SLACK));
    }
    for w in ladder.windows(2) {
        records.push(CheckRecord::leq_abs("glowny.ii.ladder", &digest, w[1].gap, w[0].gap, LADDER_SLACK));
    }
    Ok(GlownyReport {
        lambda,
        r,
        q_norm,
        ladder,
        records,
    })
}

/// Convex test functions for the domination check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexTestFunction {
    ExpTilt(f64),
    Hinge(f64),
}

impl ConvexTestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::ExpTilt(t) => (t * x).exp(),
            Self::Hinge(a) => (x - a).max(0.0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::ExpTilt(t) => format!("exp_tilt({t})"),
            Self::Hinge(a) => format!("hinge({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationRow {
    pub test: ConvexTestFunction,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub mu: f64,
    pub lambda: f64,
    pub rows: Vec<DominationRow>,
    pub records: Vec<CheckRecord>,
}

/// `E_pi G(f(X'_1) + ... + f(X'_n)) <= E_mu G(Y_1 + ... + Y_n)` for the Doeblin chain built
/// from `(pi, lambda)` and the two-state chain at `(mu, lambda)` with `mu = pi f`.
///
/// Both sides are exact expectations under the DP laws of the sums. Exponential tilts and
/// hinges are used because hinges generate the convex order on bounded sums; this is the
/// standard characterisation, not something re-derived here.
pub fn convex_domination_check(
    pi: &StationaryDist,
    lambda: f64,
    f: &[f64],
    n: u64,
    k: u32,
    tests: &[ConvexTestFunction],
) -> Result<DominationReport> {
    grid_indices(f, k)?;
    let q = doeblin_kernel(pi, lambda, f.to_vec())?;
    let mu = pi.mean(f).clamp(0.0, 1.0);
    let params = ChainParams::new(mu, lambda)?;
    let left = sum_distribution(&q, pi.as_slice(), n, k)?;
    let right = sum_distribution(&two_state_kernel(&params)?, &[params.mu_bar(), mu], n, 1)?;
    let digest = kernel_digest(&q, serde_json::json!({"lambda": lambda, "n": n, "k": k}));
    let mut rows = Vec::with_capacity(tests.len());
    let mut records = Vec::with_capacity(tests.len());
    for test in tests {
        let l = left.expectation(|x| test.eval(x));
        let r = right.expectation(|x| test.eval(x));
        records.push(CheckRecord::leq(format!("mp1.{}", test.label()), &digest, l, r, REL_TOL));
        rows.push(DominationRow {
            test: *test,
            left: l,
            right: r,
        });
    }
    Ok(DominationReport {
        mu,
        lambda,
        rows,
        records,
    })
}

/// `p` for the `L^p(pi)` norm of the start density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormExponent {
    Finite(f64),
    Infinity,
}

impl NormExponent {
    pub fn value(&self) -> f64 {
        match *self {
            Self::Finite(p) => p,
            Self::Infinity => f64::INFINITY,
        }
    }
}

/// `||d nu / d pi||_p` on a finite space.
pub fn density_norm(nu: &[f64], pi: &StationaryDist, p: NormExponent) -> Result<f64> {
    if nu.len() != pi.len() {
        return Err(Error::invalid("nu and pi lengths differ"));
    }
    let w = pi.as_slice();
    let ratios = nu.iter().zip(w).map(|(a, b)| a / b);
    Ok(match p {
        NormExponent::Infinity => ratios.fold(0.0, f64::max),
        NormExponent::Finite(p) if p >= 1.0 => {
            let s: f64 = ratios.zip(w).map(|(r, b)| b * r.abs().powf(p)).sum();
            s.powf(1.0 / p)
        }
        NormExponent::Finite(p) => return Err(Error::invalid(format!("p = {p} must be >= 1"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub lambda: f64,
    pub mu: f64,
    pub nu_norm: f64,
    pub p_nu: f64,
    pub p_pi: f64,
    pub holder_rhs: f64,
    pub log_bound_sharp: f64,
    pub log_bound_loose: f64,
    pub records: Vec<CheckRecord>,
}

/// Start-bias transfer `P_nu <= ||d nu/d pi||_p P_pi^{1/q}`, plus the closed-form biased bounds.
pub fn verify_corollary(
    kernel: &FiniteKernel,
    nu: &[f64],
    p: NormExponent,
    epsilon: f64,
    n: u64,
    k: u32,
) -> Result<CorollaryReport> {
    let pi = stationary(kernel)?;
    let lambda = gap_below_one(kernel, &pi)?;
    let mu = pi.mean(kernel.f()).clamp(0.0, 1.0);
    let params = ChainParams::new(mu, lambda)?;
    let nu_norm = density_norm(nu, &pi, p)?;
    // the norm of a probability density is >= 1; guard rounding just below it
    let bias = InitialBias::new(p.value(), nu_norm.max(1.0))?;
    let s = threshold_index(n, mu + epsilon, k);
    let p_nu = sum_distribution(kernel, nu, n, k)?.tail(s);
    let p_pi = sum_distribution(kernel, pi.as_slice(), n, k)?.tail(s);
    let holder_rhs = nu_norm * p_pi.powf(1.0 / bias.q());
    let log_bound_sharp = bounds::biased_bound(&params, epsilon, n, &bias, BoundForm::Sharp)?;
    let log_bound_loose = bounds::biased_bound(&params, epsilon, n, &bias, BoundForm::Loose)?;
    let digest = kernel_digest(kernel, serde_json::json!({"nu": nu, "p": p, "eps": epsilon, "n": n, "k": k}));
    let records = vec![
        CheckRecord::leq("corollary.holder", &digest, p_nu, holder_rhs, REL_TOL),
        CheckRecord::leq("corollary.bound_sharp", &digest, p_nu, log_bound_sharp.exp(), REL_TOL),
        CheckRecord::leq("corollary.bound_loose", &digest, p_nu, log_bound_loose.exp(), REL_TOL),
    ];
    Ok(CorollaryReport {
        lambda,
        mu,
        nu_norm,
        p_nu,
        p_pi,
        holder_rhs,
        log_bound_sharp,
        log_bound_loose,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub lambda: f64,
    pub mu: f64,
    pub exact_tail: f64,
    pub log_sharp: f64,
    pub log_loose: f64,
    pub records: Vec<CheckRecord>,
}

/// `P_pi(S_n >= n(mu + eps)) <= exp(sharp) <= exp(loose)` with `lambda` computed from the kernel.
pub fn verify_theorem2(kernel: &FiniteKernel, epsilon: f64, n: u64, k: u32) -> Result<Theorem2Report> {
    let pi = stationary(kernel)?;
    let lambda = gap_below_one(kernel, &pi)?;
    let mu = pi.mean(kernel.f()).clamp(0.0, 1.0);
    let params = ChainParams::new(mu, lambda)?;
    let log_sharp = bounds::upper_tail_bound(&params, epsilon, n, BoundForm::Sharp)?;
    let log_loose = bounds::upper_tail_bound(&params, epsilon, n, BoundForm::Loose)?;
    let exact_tail = sum_distribution(kernel, pi.as_slice(), n, k)?.tail(threshold_index(n, mu + epsilon, k));
    let digest = kernel_digest(kernel, serde_json::json!({"eps": epsilon, "n": n, "k": k}));
    let records = vec![
        CheckRecord::leq("theorem2.exact_le_sharp", &digest, exact_tail, log_sharp.exp(), REL_TOL),
        CheckRecord::leq_abs(
            "theorem2.sharp_le_loose",
            &digest,
            log_sharp,
            log_loose,
            1e-12 * log_loose.abs().max(1.0),
        ),
    ];
    Ok(Theorem2Report {
        lambda,
        mu,
        exact_tail,
        log_sharp,
        log_loose,
        records,
    })
}
