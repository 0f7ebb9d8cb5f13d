//! Python bindings. The extension module is importable as `markov_hoeffding`.

use markov_hoeffding::bounds::{
    self, BoundForm, BoundSpec, ChainParams, InitialBias, Tail,
};
use markov_hoeffding::oracle::{self, Suite};
use markov_hoeffding::simulate::{self as sim, TailExperiment};
use markov_hoeffding::spectral::{self, StationaryDist, TiltBase};
use markov_hoeffding::{Error, ErrorClass};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

create_exception!(markov_hoeffding, ValidationError, PyValueError);
create_exception!(markov_hoeffding, AssumptionViolatedError, PyValueError);
create_exception!(markov_hoeffding, NumericalError, PyArithmeticError);

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Validation => ValidationError::new_err(msg),
        ErrorClass::AssumptionViolated => AssumptionViolatedError::new_err(msg),
        ErrorClass::Numerical => NumericalError::new_err(msg),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for markov_hoeffding::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Serialise through JSON into plain Python dicts and lists.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_form(form: &str) -> PyResult<BoundForm> {
    match form {
        "sharp" => Ok(BoundForm::Sharp),
        "loose" => Ok(BoundForm::Loose),
        other => Err(ValidationError::new_err(format!("unknown form {other:?}; expected sharp or loose"))),
    }
}

fn parse_tail(tail: &str) -> PyResult<Tail> {
    match tail {
        "upper" => Ok(Tail::Upper),
        "lower" => Ok(Tail::Lower),
        "two_sided" | "two-sided" => Ok(Tail::TwoSided),
        other => Err(ValidationError::new_err(format!(
            "unknown tail {other:?}; expected upper, lower or two_sided"
        ))),
    }
}

fn make_spec(form: &str, tail: &str, p: Option<f64>, nu_norm: Option<f64>) -> PyResult<BoundSpec> {
    let bias = match (p, nu_norm) {
        (Some(p), norm) => Some(InitialBias::new(p, norm.unwrap_or(1.0)).py()?),
        (None, Some(_)) => return Err(ValidationError::new_err("nu_norm requires p")),
        (None, None) => None,
    };
    Ok(BoundSpec::new(parse_form(form)?, parse_tail(tail)?, bias))
}

/// Summary parameters `(mu, lambda)` of a chain and the bounds they determine.
#[pyclass(name = "ChainParams", frozen)]
struct PyChainParams {
    inner: ChainParams,
}

#[pymethods]
impl PyChainParams {
    #[new]
    #[pyo3(signature = (mu, lambda_))]
    fn new(mu: f64, lambda_: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ChainParams::new(mu, lambda_).py()?,
        })
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn mu_bar(&self) -> f64 {
        self.inner.mu_bar()
    }

    /// Natural log of the bound on the chosen tail.
    #[pyo3(signature = (eps, n, form = "sharp", tail = "upper", p = None, nu_norm = None))]
    fn log_bound(
        &self,
        eps: f64,
        n: u64,
        form: &str,
        tail: &str,
        p: Option<f64>,
        nu_norm: Option<f64>,
    ) -> PyResult<f64> {
        let spec = make_spec(form, tail, p, nu_norm)?;
        bounds::log_bound(&self.inner, eps, n, &spec).py()
    }

    fn sharp(&self, eps: f64, n: u64) -> PyResult<f64> {
        bounds::upper_tail_bound(&self.inner, eps, n, BoundForm::Sharp).py()
    }

    fn loose(&self, eps: f64, n: u64) -> PyResult<f64> {
        bounds::upper_tail_bound(&self.inner, eps, n, BoundForm::Loose).py()
    }

    /// `(log_value, t_star)` of the numerical Chernoff optimum.
    fn chernoff(&self, eps: f64, n: u64) -> PyResult<(f64, f64)> {
        let c = bounds::chernoff_log_bound(&self.inner, eps, n).py()?;
        Ok((c.log_value, c.t_star))
    }

    fn theta(&self, t: f64) -> f64 {
        bounds::theta(&self.inner, t)
    }

    #[pyo3(signature = (eps, n, allow_degenerate = false))]
    fn report<'py>(&self, py: Python<'py>, eps: f64, n: u64, allow_degenerate: bool) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &bounds::bound_report(&self.inner, eps, n, allow_degenerate).py()?)
    }

    /// Smallest `n` whose bound is at most `delta`.
    #[pyo3(signature = (eps, delta, form = "sharp", tail = "upper", p = None, nu_norm = None))]
    fn sample_size(
        &self,
        eps: f64,
        delta: f64,
        form: &str,
        tail: &str,
        p: Option<f64>,
        nu_norm: Option<f64>,
    ) -> PyResult<u64> {
        let spec = make_spec(form, tail, p, nu_norm)?;
        bounds::sample_size(&self.inner, eps, delta, &spec).py()
    }

    /// `(eps, saturated)` at which the bound equals `delta`.
    #[pyo3(signature = (n, delta, form = "sharp", tail = "upper", p = None, nu_norm = None))]
    fn half_width(
        &self,
        n: u64,
        delta: f64,
        form: &str,
        tail: &str,
        p: Option<f64>,
        nu_norm: Option<f64>,
    ) -> PyResult<(f64, bool)> {
        let spec = make_spec(form, tail, p, nu_norm)?;
        let h = bounds::half_width(&self.inner, n, delta, &spec).py()?;
        Ok((h.epsilon, h.saturated))
    }

    /// Exact upper tail of the two-state extremal chain.
    fn two_state_tail(&self, n: u64, eps: f64) -> PyResult<f64> {
        oracle::two_state_tail(&self.inner, n, eps).py()
    }

    fn two_state_mgf(&self, t: f64, n: u64) -> PyResult<f64> {
        oracle::two_state_mgf(&self.inner, t, n).py()
    }

    fn __repr__(&self) -> String {
        format!("ChainParams(mu={}, lambda_={})", self.inner.mu(), self.inner.lambda())
    }
}

/// Finite transition matrix `P` with a function `f` valued in `[0, 1]`.
#[pyclass(name = "FiniteKernel", frozen)]
struct PyFiniteKernel {
    inner: spectral::FiniteKernel,
}

impl PyFiniteKernel {
    fn pi(&self) -> PyResult<StationaryDist> {
        spectral::stationary(&self.inner).py()
    }
}

#[pymethods]
impl PyFiniteKernel {
    #[new]
    #[pyo3(signature = (p, f))]
    fn new(p: Vec<Vec<f64>>, f: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: spectral::FiniteKernel::new(p, f).py()?,
        })
    }

    /// Doeblin kernel `(1 - lambda) 1 pi' + lambda I`.
    #[staticmethod]
    #[pyo3(signature = (pi, lambda_, f))]
    fn doeblin(pi: Vec<f64>, lambda_: f64, f: Vec<f64>) -> PyResult<Self> {
        let pi = StationaryDist::new(pi).py()?;
        Ok(Self {
            inner: spectral::doeblin_kernel(&pi, lambda_, f).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (mu, lambda_))]
    fn two_state(mu: f64, lambda_: f64) -> PyResult<Self> {
        let params = ChainParams::new(mu, lambda_).py()?;
        Ok(Self {
            inner: oracle::two_state_kernel(&params).py()?,
        })
    }

    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f().to_vec()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(self.pi()?.as_slice().to_vec())
    }

    /// Stationary mean of `f`.
    fn mean(&self) -> PyResult<f64> {
        Ok(self.pi()?.mean(self.inner.f()))
    }

    /// `||P - Pi||` in `L2(pi)`; raises when the estimate reaches 1.
    #[pyo3(signature = (allow_violation = false))]
    fn spectral_gap(&self, allow_violation: bool) -> PyResult<f64> {
        let g = spectral::spectral_norm_gap(&self.inner, &self.pi()?).py()?;
        if g.assumption_violated && !allow_violation {
            return Err(to_py_err(Error::AssumptionViolated { lambda: g.lambda }));
        }
        Ok(g.lambda)
    }

    /// Top of the spectrum of `P - Pi`; reversible kernels only.
    fn reversible_rho(&self) -> PyResult<f64> {
        Ok(spectral::reversible_rho(&self.inner, &self.pi()?).py()?.rho)
    }

    fn params(&self) -> PyResult<PyChainParams> {
        let pi = self.pi()?;
        let lambda = spectral::spectral_norm_gap(&self.inner, &pi).py()?.lambda;
        PyChainParams::new(pi.mean(self.inner.f()), lambda)
    }

    /// `||e^{tf/2} P e^{tf/2}||` in `L2(pi)`.
    #[pyo3(signature = (t, base = "P"))]
    fn tilted_norm(&self, t: f64, base: &str) -> PyResult<f64> {
        let base = match base {
            "P" | "p" => TiltBase::P,
            "Q" | "q" => TiltBase::Q,
            other => return Err(ValidationError::new_err(format!("unknown base {other:?}; expected P or Q"))),
        };
        spectral::tilted_operator(&self.inner, base, t).norm(&self.pi()?).py()
    }

    /// `E_pi exp(t S_n)` computed exactly.
    fn exact_mgf(&self, t: f64, n: u64) -> PyResult<f64> {
        oracle::exact_mgf(&self.inner, &self.pi()?, t, n).py()
    }

    /// Law of `k S_n` on `{0, ..., n k}` from the given start (default `pi`); `f` must lie on the grid `1/k`.
    #[pyo3(signature = (n, k, initial = None))]
    fn sum_distribution(&self, n: u64, k: u32, initial: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let initial = match initial {
            Some(v) => v,
            None => self.pi()?.as_slice().to_vec(),
        };
        Ok(oracle::sum_distribution(&self.inner, &initial, n, k).py()?.masses)
    }

    /// `P_pi(S_n >= n level)` computed exactly on the grid `1/k`.
    fn exact_tail(&self, n: u64, level: f64, k: u32) -> PyResult<f64> {
        let s = oracle::threshold_index(n, level, k);
        oracle::exact_tail(&self.inner, &self.pi()?, n, s, k).py()
    }

    fn __repr__(&self) -> String {
        format!("FiniteKernel(n_states={})", self.inner.n_states())
    }
}

/// `f_k = ceil(k f) / k` componentwise.
#[pyfunction]
fn discretize(f: Vec<f64>, k: u32) -> Vec<f64> {
    spectral::discretize(&f, k)
}

/// Run a verification suite and return `{"records": [...], "failures": [...]}`.
#[pyfunction]
#[pyo3(signature = (suite, seed = 0, instances = 25))]
fn verify<'py>(py: Python<'py>, suite: &str, seed: u64, instances: usize) -> PyResult<Bound<'py, PyAny>> {
    let suite: Suite = suite.parse().py()?;
    let outcome = py.detach(|| oracle::run_suite(suite, seed, instances));
    to_python(py, &outcome)
}

/// Run one Monte Carlo tail experiment given as a dict or JSON string.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text: String = if config.is_instance_of::<PyDict>() {
        py.import("json")?.call_method1("dumps", (config,))?.extract()?
    } else {
        config.extract()?
    };
    let exp: TailExperiment = serde_json::from_str(&text).map_err(|e| ValidationError::new_err(e.to_string()))?;
    let result = py.detach(|| sim::run_tail_experiment(&exp)).py()?;
    to_python(py, &result)
}

/// Two-sided Clopper-Pearson interval for `hits` out of `trials`.
#[pyfunction]
#[pyo3(signature = (hits, trials, level = 0.99))]
fn clopper_pearson(hits: u64, trials: u64, level: f64) -> PyResult<(f64, f64)> {
    sim::clopper_pearson(hits, trials, level).py()
}

#[pymodule]
#[pyo3(name = "markov_hoeffding")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyChainParams>()?;
    m.add_class::<PyFiniteKernel>()?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson, m)?)?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("AssumptionViolatedError", py.get_type::<AssumptionViolatedError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    Ok(())
}
