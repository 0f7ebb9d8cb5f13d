//! Closed-form Hoeffding-type bounds for partial sums `S_n = f(X_1) + ... + f(X_n)`
//! of a chain whose transition operator satisfies `||P - Pi||_{L2(pi)} = lambda < 1`,
//! with `f` valued in `[0, 1]` and stationary mean `mu`.
//!
//! Every bound is returned as a natural logarithm of a probability. Exponentiate
//! only for display; at realistic `n` the linear scale underflows.

mod chernoff;
mod inverse;

pub use chernoff::{chernoff_log_bound, ChernoffOptimum};
pub use inverse::{half_width, loose_half_width, sample_size, HalfWidth};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding that `epsilon` sits exactly on the feasibility boundary.
const BOUNDARY_EPS: f64 = 1e-14;

/// Stationary mean of `f` and the spectral-gap complement `lambda`.
///
/// These two numbers are all the closed-form bounds need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    mu: f64,
    lambda: f64,
}

impl ChainParams {
    /// Validates `0 <= mu <= 1` and `0 <= lambda < 1`.
    ///
    /// `lambda >= 1` is reported as an assumption violation rather than a plain
    /// validation error, since it means the chain has no spectral gap.
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::invalid(format!("mu = {mu} outside [0, 1]")));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::invalid(format!("lambda = {lambda} must be >= 0")));
        }
        if lambda >= 1.0 {
            return Err(Error::AssumptionViolated { lambda });
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu_bar(&self) -> f64 {
        1.0 - self.mu
    }

    /// Parameters of the reflected problem `f -> 1 - f`, which maps lower tails onto upper tails.
    pub fn reflected(&self) -> Self {
        Self {
            mu: 1.0 - self.mu,
            lambda: self.lambda,
        }
    }

    fn is_degenerate(&self) -> bool {
        self.mu <= 0.0 || self.mu >= 1.0
    }

    fn require_interior(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::DegenerateMean { mu: self.mu })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    Upper,
    Lower,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    #[default]
    Sharp,
    Loose,
}

/// A deviation event `S_n >= n(mu + epsilon)` (or its mirror for lower tails).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationQuery {
    pub epsilon: f64,
    pub n: u64,
    pub tail: Tail,
}

impl DeviationQuery {
    pub fn new(epsilon: f64, n: u64, tail: Tail) -> Self {
        Self { epsilon, n, tail }
    }

    pub fn validate(&self, params: &ChainParams) -> Result<()> {
        validate_eps_n(self.epsilon, self.n)?;
        let upper_ok = self.epsilon <= params.mu_bar() + BOUNDARY_EPS;
        let lower_ok = self.epsilon <= params.mu() + BOUNDARY_EPS;
        let ok = match self.tail {
            Tail::Upper => upper_ok,
            Tail::Lower => lower_ok,
            Tail::TwoSided => upper_ok || lower_ok,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "epsilon = {} infeasible for {:?} tail at mu = {}",
                self.epsilon,
                self.tail,
                params.mu()
            )))
        }
    }
}

/// Start-distribution correction: `p` in `(1, inf]` and `nu_norm = ||d nu / d pi||_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialBias {
    p: f64,
    nu_norm: f64,
}

impl InitialBias {
    /// `p = f64::INFINITY` selects the sup-norm.
    pub fn new(p: f64, nu_norm: f64) -> Result<Self> {
        if p.is_nan() || p <= 1.0 {
            return Err(Error::invalid(format!("p = {p} must be > 1")));
        }
        if nu_norm.is_nan() || nu_norm < 1.0 {
            return Err(Error::invalid(format!(
                "nu_norm = {nu_norm} must be >= 1 (a probability density has L^p norm >= 1)"
            )));
        }
        Ok(Self { p, nu_norm })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn nu_norm(&self) -> f64 {
        self.nu_norm
    }

    /// Hölder conjugate of `p`.
    pub fn q(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

/// A log-scale bound together with the flag raised when `epsilon` sits on `mu_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBound {
    pub value: f64,
    pub boundary_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `None` when the mean is degenerate and the loose fallback was requested.
    pub log_sharp: Option<f64>,
    pub log_loose: f64,
    pub t_star: Option<f64>,
    pub theta_star: Option<f64>,
    pub delta: Option<f64>,
    pub boundary_limit: bool,
    pub degenerate_mean: bool,
}

/// The two-state chain `lambda I + (1 - lambda) 1 m'` with stationary vector `m = (mu_bar, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateMatrix {
    pub params: ChainParams,
    pub entries: [[f64; 2]; 2],
}

impl TwoStateMatrix {
    pub fn new(params: ChainParams) -> Self {
        let l = params.lambda();
        let (mb, m) = (params.mu_bar(), params.mu());
        let entries = [
            [l + (1.0 - l) * mb, (1.0 - l) * m],
            [(1.0 - l) * mb, l + (1.0 - l) * m],
        ];
        Self { params, entries }
    }

    pub fn stationary(&self) -> [f64; 2] {
        [self.params.mu_bar(), self.params.mu()]
    }

    /// Non-unit eigenvalue. Equals `lambda` by construction; computed as `trace - 1`.
    pub fn second_eigenvalue(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1] - 1.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|r| r.to_vec()).collect()
    }
}

fn validate_eps_n(epsilon: f64, n: u64) -> Result<()> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be > 0")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    Ok(())
}

/// Returns `true` when `epsilon` is on the boundary `mu_bar`, errors when beyond it.
fn check_upper_eps(params: &ChainParams, epsilon: f64) -> Result<bool> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be > 0")));
    }
    let mb = params.mu_bar();
    if epsilon > mb + BOUNDARY_EPS {
        return Err(Error::invalid(format!(
            "epsilon = {epsilon} exceeds 1 - mu = {mb}"
        )));
    }
    Ok((epsilon - mb).abs() <= BOUNDARY_EPS)
}

/// `1 + 4 lambda (mu + eps)(mu_bar - eps) / (mu mu_bar (1 - lambda)^2)`.
pub fn delta(params: &ChainParams, epsilon: f64) -> Result<f64> {
    params.require_interior()?;
    let boundary = check_upper_eps(params, epsilon)?;
    let (m, mb, l) = (params.mu(), params.mu_bar(), params.lambda());
    let slack = if boundary { 0.0 } else { mb - epsilon };
    Ok(1.0 + 4.0 * l * (m + epsilon) * slack / (m * mb * (1.0 - l) * (1.0 - l)))
}

/// Log of the Perron-Frobenius eigenvalue of `diag(1, e^t) M_{mu,lambda}`.
///
/// The eigenvalue is the larger root of `x^2 - (a + e^t b) x + lambda e^t`, where `a` and
/// `b` are the diagonal entries of `M` and `lambda e^t` is its determinant. For `t > 0`
/// everything is divided through by `e^t` so large tilts do not overflow.
pub fn log_theta(params: &ChainParams, t: f64) -> f64 {
    let (a, b, c) = theta_coefficients(params);
    if t > 0.0 {
        let s = (-t).exp();
        let tr = a * s + b;
        let disc = (a * s - b).powi(2) + 4.0 * c * s;
        t + (0.5 * (tr + disc.sqrt())).ln()
    } else {
        let e = t.exp();
        let tr = a + e * b;
        let disc = (a - e * b).powi(2) + 4.0 * c * e;
        (0.5 * (tr + disc.sqrt())).ln()
    }
}

pub fn theta(params: &ChainParams, t: f64) -> f64 {
    log_theta(params, t).exp()
}

/// `d/dt log theta_t`; the mean of the tilted two-state law, in `[0, 1]`.
pub(crate) fn dlog_theta(params: &ChainParams, t: f64) -> f64 {
    let (a, b, c) = theta_coefficients(params);
    let l = params.lambda();
    // Scaled by e^{-t} when t > 0: theta~ = theta e^{-t}, tr~ = a e^{-t} + b.
    let (s, scaled) = if t > 0.0 { ((-t).exp(), true) } else { (t.exp(), false) };
    let (tr, disc, det_term) = if scaled {
        (a * s + b, (a * s - b).powi(2) + 4.0 * c * s, l * s)
    } else {
        (a + s * b, (a - s * b).powi(2) + 4.0 * c * s, l * s)
    };
    let root = disc.sqrt();
    let th = 0.5 * (tr + root);
    if scaled {
        (b * th - det_term) / (root * th)
    } else {
        s * (b * th - l) / (root * th)
    }
}

/// Diagonal entries `a`, `b` and the off-diagonal product `(1-lambda)^2 mu mu_bar`.
fn theta_coefficients(params: &ChainParams) -> (f64, f64, f64) {
    let l = params.lambda();
    let (m, mb) = (params.mu(), params.mu_bar());
    let a = l + (1.0 - l) * mb;
    let b = l + (1.0 - l) * m;
    let c = (1.0 - l) * (1.0 - l) * m * mb;
    (a, b, c)
}

/// Log of the product-form bound on `P_pi(S_n >= n(mu + epsilon))`.
///
/// At `epsilon = mu_bar` the second factor degenerates to `0 * log(inf)`; the continuous
/// limit `n log(mu + mu_bar lambda)` is returned with `boundary_limit` set.
pub fn sharp_log_bound(params: &ChainParams, epsilon: f64, n: u64) -> Result<LogBound> {
    params.require_interior()?;
    let boundary = check_upper_eps(params, epsilon)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let (m, mb, l) = (params.mu(), params.mu_bar(), params.lambda());
    let nf = n as f64;
    if boundary {
        return Ok(LogBound {
            value: nf * (m + mb * l).ln(),
            boundary_limit: true,
        });
    }
    let root = delta(params, epsilon)?.sqrt();
    let hi = m + epsilon;
    let lo = mb - epsilon;
    let first = hi * ((m + mb * l).ln() - (-2.0 * lo / (1.0 + root)).ln_1p());
    let second = lo * ((mb + m * l).ln() - (-2.0 * hi / (1.0 + root)).ln_1p());
    Ok(LogBound {
        value: (nf * (first + second)).min(0.0),
        boundary_limit: false,
    })
}

/// `-2 (1 - lambda)/(1 + lambda) epsilon^2 n`, valid for every `mu`.
pub fn loose_log_bound(params: &ChainParams, epsilon: f64, n: u64) -> Result<f64> {
    validate_eps_n(epsilon, n)?;
    Ok(loose_exponent(params.lambda(), epsilon) * n as f64)
}

fn loose_exponent(lambda: f64, epsilon: f64) -> f64 {
    -2.0 * ((1.0 - lambda) / (1.0 + lambda)) * epsilon * epsilon
}

/// Upper-tail bound in the requested form.
pub fn upper_tail_bound(params: &ChainParams, epsilon: f64, n: u64, form: BoundForm) -> Result<f64> {
    match form {
        BoundForm::Sharp => sharp_log_bound(params, epsilon, n).map(|b| b.value),
        BoundForm::Loose => {
            check_upper_eps(params, epsilon)?;
            loose_log_bound(params, epsilon, n)
        }
    }
}

/// Lower tail `P(S_n <= n(mu - epsilon))`, via the reflection `f -> 1 - f`.
pub fn lower_tail_bound(params: &ChainParams, epsilon: f64, n: u64, form: BoundForm) -> Result<f64> {
    if epsilon > params.mu() + BOUNDARY_EPS {
        return Err(Error::invalid(format!(
            "epsilon = {epsilon} exceeds mu = {} for the lower tail",
            params.mu()
        )));
    }
    upper_tail_bound(&params.reflected(), epsilon, n, form)
}

/// Start-distribution-corrected bound: `log nu_norm + (1/q) log P_pi-bound`.
pub fn biased_bound(
    params: &ChainParams,
    epsilon: f64,
    n: u64,
    bias: &InitialBias,
    form: BoundForm,
) -> Result<f64> {
    let base = upper_tail_bound(params, epsilon, n, form)?;
    Ok(apply_bias(base, Some(bias)))
}

fn apply_bias(log_bound: f64, bias: Option<&InitialBias>) -> f64 {
    match bias {
        None => log_bound,
        Some(b) => b.nu_norm().ln() + log_bound / b.q(),
    }
}

/// Everything that selects one bound function of `(epsilon, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundSpec {
    pub form: BoundForm,
    pub tail: Tail,
    pub bias: Option<InitialBias>,
}

impl BoundSpec {
    pub fn new(form: BoundForm, tail: Tail, bias: Option<InitialBias>) -> Self {
        Self { form, tail, bias }
    }
}

/// General entry point: tail, form and start bias in one call.
///
/// Two-sided bounds are the union bound of both tails. A tail that is infeasible
/// (the event is empty) contributes zero probability.
pub fn log_bound(params: &ChainParams, epsilon: f64, n: u64, spec: &BoundSpec) -> Result<f64> {
    let q = DeviationQuery::new(epsilon, n, spec.tail);
    q.validate(params)?;
    let bias = spec.bias.as_ref();
    match spec.tail {
        Tail::Upper => Ok(apply_bias(upper_tail_bound(params, epsilon, n, spec.form)?, bias)),
        Tail::Lower => Ok(apply_bias(lower_tail_bound(params, epsilon, n, spec.form)?, bias)),
        Tail::TwoSided => {
            let upper = if epsilon <= params.mu_bar() + BOUNDARY_EPS {
                apply_bias(upper_tail_bound(params, epsilon, n, spec.form)?, bias)
            } else {
                f64::NEG_INFINITY
            };
            let lower = if epsilon <= params.mu() + BOUNDARY_EPS {
                apply_bias(lower_tail_bound(params, epsilon, n, spec.form)?, bias)
            } else {
                f64::NEG_INFINITY
            };
            Ok(log_sum_exp(upper, lower))
        }
    }
}

pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Full upper-tail report: sharp and loose bounds, optimal tilt and `Delta`.
///
/// With `allow_degenerate`, `mu` in `{0, 1}` yields the loose bound alone with
/// `degenerate_mean` set instead of an error.
pub fn bound_report(
    params: &ChainParams,
    epsilon: f64,
    n: u64,
    allow_degenerate: bool,
) -> Result<BoundReport> {
    if params.is_degenerate() {
        if !allow_degenerate {
            return Err(Error::DegenerateMean { mu: params.mu() });
        }
        check_upper_eps(params, epsilon)?;
        return Ok(BoundReport {
            log_sharp: None,
            log_loose: loose_log_bound(params, epsilon, n)?,
            t_star: None,
            theta_star: None,
            delta: None,
            boundary_limit: false,
            degenerate_mean: true,
        });
    }
    let sharp = sharp_log_bound(params, epsilon, n)?;
    let loose = loose_log_bound(params, epsilon, n)?;
    let (t_star, theta_star) = if sharp.boundary_limit {
        (Some(f64::INFINITY), None)
    } else {
        let opt = chernoff_log_bound(params, epsilon, n)?;
        (Some(opt.t_star), Some(theta(params, opt.t_star)))
    };
    Ok(BoundReport {
        log_sharp: Some(sharp.value),
        log_loose: loose,
        t_star,
        theta_star,
        delta: Some(delta(params, epsilon)?),
        boundary_limit: sharp.boundary_limit,
        degenerate_mean: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    fn p(mu: f64, lambda: f64) -> ChainParams {
        ChainParams::new(mu, lambda).unwrap()
    }

    fn kl(a: f64, b: f64) -> f64 {
        a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
    }

    #[test]
    fn params_validation() {
        assert!(ChainParams::new(0.5, 1.0).is_err());
        assert!(matches!(
            ChainParams::new(0.5, 1.0),
            Err(Error::AssumptionViolated { .. })
        ));
        assert!(matches!(ChainParams::new(0.5, -0.1), Err(Error::Validation(_))));
        assert!(ChainParams::new(1.1, 0.1).is_err());
        assert!(ChainParams::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(&p(0.5, 0.0), 0.1).unwrap(), 1.0);
        // 1 + 4 * 0.5 * 0.6 * 0.4 / (0.25 * 0.25)
        let expected = 1.0 + 4.0 * 0.5 * 0.6 * 0.4 / (0.25 * 0.25);
        assert_relative_eq!(expected, 8.68, max_relative = 1e-14);
        assert_relative_eq!(delta(&p(0.5, 0.5), 0.1).unwrap(), expected, max_relative = 1e-14);
        assert_eq!(delta(&p(0.5, 0.5), 0.5).unwrap(), 1.0);
        assert!(matches!(delta(&p(0.0, 0.5), 0.1), Err(Error::DegenerateMean { .. })));
        assert!(delta(&p(0.5, 0.5), 0.6).is_err());
        assert!(delta(&p(0.5, 0.5), -0.1).is_err());
    }

    #[test]
    fn theta_examples() {
        for &(m, l) in &[(0.1, 0.0), (0.5, 0.3), (0.9, 0.95)] {
            assert_relative_eq!(theta(&p(m, l), 0.0), 1.0, max_relative = 1e-15);
        }
        assert_relative_eq!(
            theta(&p(0.5, 0.0), 1.0),
            0.5 + 0.5 * 1f64.exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(theta(&p(0.5, 0.0), 1.0), 1.859141, epsilon = 1e-6);
    }

    #[test]
    fn theta_matches_dense_eigensolve() {
        let params = p(0.4, 0.5);
        let t: f64 = 0.7;
        let m = TwoStateMatrix::new(params).entries;
        let dm = Matrix2::new(m[0][0], m[0][1], t.exp() * m[1][0], t.exp() * m[1][1]);
        let eig = dm.complex_eigenvalues();
        let top = eig.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert_relative_eq!(theta(&params, t), top, max_relative = 1e-12);
    }

    #[test]
    fn theta_determinant_identity() {
        // det(diag(1, e^t) M) = lambda e^t, so theta solves x^2 - tr x + lambda e^t = 0.
        for &(m, l, t) in &[(0.4, 0.5, 0.7), (0.2, 0.9, 2.0), (0.7, 0.1, -1.3)] {
            let params = p(m, l);
            let e = TwoStateMatrix::new(params).entries;
            let et = f64::exp(t);
            let det = e[0][0] * et * e[1][1] - e[0][1] * et * e[1][0];
            assert_relative_eq!(det, l * et, max_relative = 1e-13);
            let th = theta(&params, t);
            let tr = e[0][0] + et * e[1][1];
            let residual = th * th - tr * th + l * et;
            assert!(residual.abs() <= 1e-12 * th * th, "residual {residual}");
        }
    }

    #[test]
    fn dlog_theta_matches_finite_difference() {
        for &(m, l, t) in &[(0.4, 0.5, 0.7), (0.2, 0.9, 3.0), (0.7, 0.1, -0.5), (0.5, 0.5, 0.0)] {
            let params = p(m, l);
            let h = 1e-6;
            let fd = (log_theta(&params, t + h) - log_theta(&params, t - h)) / (2.0 * h);
            assert_relative_eq!(dlog_theta(&params, t), fd, max_relative = 1e-7);
        }
        assert_relative_eq!(dlog_theta(&p(0.3, 0.6), 0.0), 0.3, max_relative = 1e-14);
    }

    #[test]
    fn theta_handles_large_tilts() {
        let params = p(0.3, 0.6);
        let lt = log_theta(&params, 800.0);
        assert!(lt.is_finite());
        // log theta -> t + log b for large t
        assert_relative_eq!(lt - 800.0, (0.6f64 + 0.4 * 0.3).ln(), max_relative = 1e-12);
    }

    #[test]
    fn sharp_bound_examples() {
        let one = sharp_log_bound(&p(0.5, 0.0), 0.1, 1).unwrap();
        let kl_val = 0.6 * (0.6f64 / 0.5).ln() + 0.4 * (0.4f64 / 0.5).ln();
        assert_relative_eq!(one.value, -kl_val, max_relative = 1e-12);
        assert_relative_eq!(one.value, -0.0201355, epsilon = 1e-7);
        let hundred = sharp_log_bound(&p(0.5, 0.0), 0.1, 100).unwrap();
        assert_relative_eq!(hundred.value, 100.0 * one.value, max_relative = 1e-12);
        assert!(!hundred.boundary_limit);
    }

    #[test]
    fn sharp_bound_boundary_limit() {
        let params = p(0.3, 0.4);
        let b = sharp_log_bound(&params, 0.7, 10).unwrap();
        assert!(b.boundary_limit);
        assert_relative_eq!(b.value, 10.0 * (0.3f64 + 0.7 * 0.4).ln(), max_relative = 1e-14);
        // continuity from the inside
        let inside = sharp_log_bound(&params, 0.7 - 1e-9, 10).unwrap();
        assert!((inside.value - b.value).abs() < 1e-6);
        assert!(sharp_log_bound(&params, 0.71, 10).is_err());
    }

    #[test]
    fn iid_reduction() {
        for i in 1..10 {
            let m = i as f64 / 10.0;
            let params = p(m, 0.0);
            for j in 1..5 {
                let e = (1.0 - m) * j as f64 / 5.0;
                let s = sharp_log_bound(&params, e, 7).unwrap().value;
                assert_relative_eq!(s, -7.0 * kl(m + e, m), max_relative = 1e-12);
                assert_eq!(loose_log_bound(&params, e, 7).unwrap(), -2.0 * e * e * 7.0);
            }
        }
    }

    #[test]
    fn loose_examples() {
        assert_eq!(loose_log_bound(&p(0.5, 0.0), 0.1, 100).unwrap(), -2.0 * 0.1 * 0.1 * 100.0);
        assert_relative_eq!(loose_log_bound(&p(0.5, 0.0), 0.1, 100).unwrap(), -2.0, max_relative = 1e-15);
        assert_relative_eq!(
            loose_log_bound(&p(0.5, 1.0 / 3.0), 0.1, 100).unwrap(),
            -1.0,
            max_relative = 1e-14
        );
        let near_one = loose_log_bound(&p(0.5, 1.0 - 1e-12), 0.1, 100).unwrap();
        assert!(near_one < 0.0 && near_one > -1e-9);
    }

    #[test]
    fn biased_examples() {
        let params = p(0.5, 1.0 / 3.0);
        let theorem_one = biased_bound(&params, 0.1, 100, &InitialBias::new(2.0, 1.0).unwrap(), BoundForm::Loose)
            .unwrap();
        let expected = -((1.0 - params.lambda()) / (1.0 + params.lambda())) * 0.01 * 100.0;
        assert_relative_eq!(theorem_one, expected, max_relative = 1e-14);

        let stationary = biased_bound(
            &params,
            0.1,
            100,
            &InitialBias::new(f64::INFINITY, 1.0).unwrap(),
            BoundForm::Loose,
        )
        .unwrap();
        assert_eq!(stationary, loose_log_bound(&params, 0.1, 100).unwrap());

        let plug = biased_bound(&params, 0.1, 100, &InitialBias::new(2.0, 1.5).unwrap(), BoundForm::Loose)
            .unwrap();
        assert_relative_eq!(plug, 1.5f64.ln() - 0.5, max_relative = 1e-12);
        assert_relative_eq!(plug, -0.094535, epsilon = 1e-6);

        let sharp = biased_bound(&params, 0.1, 100, &InitialBias::new(3.0, 1.2).unwrap(), BoundForm::Sharp)
            .unwrap();
        let base = sharp_log_bound(&params, 0.1, 100).unwrap().value;
        assert_relative_eq!(sharp, 1.2f64.ln() + base * 2.0 / 3.0, max_relative = 1e-14);

        assert!(InitialBias::new(1.0, 1.0).is_err());
        assert!(InitialBias::new(0.5, 1.0).is_err());
        assert!(InitialBias::new(2.0, 0.9).is_err());
        assert_eq!(InitialBias::new(2.0, 1.0).unwrap().q(), 2.0);
    }

    #[test]
    fn lower_and_two_sided() {
        for form in [BoundForm::Sharp, BoundForm::Loose] {
            let params = p(0.5, 0.4);
            assert_eq!(
                lower_tail_bound(&params, 0.1, 50, form).unwrap(),
                upper_tail_bound(&params, 0.1, 50, form).unwrap()
            );
        }
        let lower = lower_tail_bound(&p(0.3, 0.0), 0.1, 20, BoundForm::Sharp).unwrap();
        let mirrored = sharp_log_bound(&p(0.7, 0.0), 0.1, 20).unwrap().value;
        assert_eq!(lower, mirrored);
        assert!(lower_tail_bound(&p(0.3, 0.0), 0.4, 20, BoundForm::Sharp).is_err());

        let spec = BoundSpec::new(BoundForm::Loose, Tail::TwoSided, None);
        let two = log_bound(&p(0.5, 0.0), 0.1, 100, &spec).unwrap();
        assert_relative_eq!(two, 2f64.ln() - 2.0, max_relative = 1e-14);

        // one tail infeasible: two-sided collapses to the other one
        let one_sided = log_bound(&p(0.2, 0.0), 0.5, 10, &spec).unwrap();
        assert_eq!(one_sided, upper_tail_bound(&p(0.2, 0.0), 0.5, 10, BoundForm::Loose).unwrap());
    }

    #[test]
    fn two_state_matrix_properties() {
        for &(m, l) in &[(0.4, 0.5), (0.6, 0.5), (0.1, 0.0), (0.9, 0.95)] {
            let tsm = TwoStateMatrix::new(p(m, l));
            let e = tsm.entries;
            for row in e {
                assert_relative_eq!(row[0] + row[1], 1.0, max_relative = 1e-15);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
            let st = tsm.stationary();
            for j in 0..2 {
                let v = st[0] * e[0][j] + st[1] * e[1][j];
                assert_relative_eq!(v, st[j], max_relative = 1e-14);
            }
            assert!((tsm.second_eigenvalue() - l).abs() <= 1e-15);
        }
    }

    #[test]
    fn report_degenerate_mean() {
        let params = p(0.0, 0.3);
        assert!(matches!(bound_report(&params, 0.2, 10, false), Err(Error::DegenerateMean { .. })));
        let r = bound_report(&params, 0.2, 10, true).unwrap();
        assert!(r.degenerate_mean);
        assert!(r.log_sharp.is_none());
        assert_eq!(r.log_loose, loose_log_bound(&params, 0.2, 10).unwrap());
    }

    #[test]
    fn report_fields() {
        let r = bound_report(&p(0.5, 0.5), 0.1, 100, false).unwrap();
        let sharp = r.log_sharp.unwrap();
        assert!(sharp <= r.log_loose && r.log_loose <= 0.0);
        assert!(r.t_star.unwrap() > 0.0);
        assert!(r.theta_star.unwrap() >= 1.0);
        assert_relative_eq!(r.delta.unwrap(), 8.68, max_relative = 1e-14);
    }
}
