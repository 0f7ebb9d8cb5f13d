//! Finite-kernel linear algebra in `L2(pi)`.
//!
//! Operator norms are always taken through the similarity `D^{1/2} M D^{-1/2}` with
//! `D = diag(pi)`, which turns the `L2(pi)` norm into the Euclidean spectral norm.

mod profile;

pub use profile::{
    discretize, eigenfunction_g, level_profile, solve_r, LevelProfile, ProfileFile, Resolution,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const REVERSIBILITY_TOL: f64 = 1e-10;
const SELF_ADJOINT_AGREEMENT: f64 = 1e-10;
/// `lambda` within this distance of 1 is treated as `>= 1`.
const VIOLATION_SLACK: f64 = 1e-12;

/// Row-stochastic matrix plus the observable `f` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    p: DMatrix<f64>,
    f: Vec<f64>,
    name: Option<String>,
}

/// On-disk chain description: `{"P": [[...]], "f": [...], "name": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>, f: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("kernel has no states"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_matrix(p, f)
    }

    pub fn from_matrix(p: DMatrix<f64>, f: Vec<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(Error::invalid(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if f.len() != n {
            return Err(Error::invalid(format!("f has {} entries, expected {n}", f.len())));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = p[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("P[{i}][{j}] = {v} is not a probability")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        for (i, &v) in f.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("f[{i}] = {v} outside [0, 1]")));
            }
        }
        Ok(Self { p, f, name: None })
    }

    pub fn from_file(file: ChainFile) -> Result<Self> {
        let name = file.name.clone();
        let mut k = Self::new(file.p, file.f)?;
        k.name = name;
        Ok(k)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            p: self.rows(),
            f: self.f.clone(),
            name: self.name.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Same transitions, different observable.
    pub fn with_f(&self, f: Vec<f64>) -> Result<Self> {
        let mut k = Self::from_matrix(self.p.clone(), f)?;
        k.name = self.name.clone();
        Ok(k)
    }

    pub fn n_states(&self) -> usize {
        self.f.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states())
            .map(|i| self.p.row(i).iter().copied().collect())
            .collect()
    }

    /// Strongly connected components of the support graph, in Tarjan order.
    pub fn communicating_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n_states();
        let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for i in 0..n {
            for j in 0..n {
                if self.p[(i, j)] > 0.0 {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.sort();
        comps
    }

    pub fn is_irreducible(&self) -> bool {
        self.communicating_classes().len() == 1
    }
}

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pi: Vec<f64>,
}

impl StationaryDist {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        for (i, &v) in pi.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("pi[{i}] = {v} must be positive")));
            }
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("pi sums to {sum}, not 1")));
        }
        Ok(Self { pi })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `pi f`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.pi.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.pi.len() != n {
            return Err(Error::invalid(format!(
                "pi has {} entries but the kernel has {n} states",
                self.pi.len()
            )));
        }
        Ok(())
    }
}

/// Solves `pi P = pi`, `sum pi = 1` by replacing one balance equation with the normalisation.
pub fn stationary(kernel: &FiniteKernel) -> Result<StationaryDist> {
    let classes = kernel.communicating_classes();
    if classes.len() > 1 {
        return Err(Error::NotIrreducible { components: classes });
    }
    let n = kernel.n_states();
    let p = kernel.matrix();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::numerical("stationary solve", "singular balance system"))?;
    // one round of iterative refinement
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let sum: f64 = x.iter().sum();
    let pi: Vec<f64> = x.iter().map(|v| v / sum).collect();
    if let Some((i, &v)) = pi.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::numerical(
            "stationary solve",
            format!("non-positive entry pi[{i}] = {v}"),
        ));
    }
    let residual = stationary_residual(kernel, &pi);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::numerical(
            "stationary solve",
            format!("residual |pi P - pi| = {residual:e}"),
        ));
    }
    StationaryDist::new(pi)
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationary_residual(kernel: &FiniteKernel, pi: &[f64]) -> f64 {
    let n = kernel.n_states();
    let p = kernel.matrix();
    (0..n)
        .map(|j| {
            let v: f64 = (0..n).map(|i| pi[i] * p[(i, j)]).sum();
            (v - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `D^{1/2} M D^{-1/2}`.
fn symmetrize(m: &DMatrix<f64>, pi: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * m[(i, j)] / pi[j].sqrt())
}

fn largest_singular_value(m: DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `||P - Pi||_{L2(pi)}`; the spectral gap is `1 - lambda`.
    pub lambda: f64,
    pub assumption_violated: bool,
}

/// `||P - 1 pi'||` in `L2(pi)`, as the top singular value of its symmetrisation.
pub fn spectral_norm_gap(kernel: &FiniteKernel, pi: &StationaryDist) -> Result<GapEstimate> {
    let n = kernel.n_states();
    pi.check_len(n)?;
    let w = pi.as_slice();
    let p = kernel.matrix();
    let centered = DMatrix::from_fn(n, n, |i, j| p[(i, j)] - w[j]);
    let lambda = largest_singular_value(symmetrize(&centered, w));
    Ok(GapEstimate {
        lambda,
        assumption_violated: lambda >= 1.0 - VIOLATION_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibleSpectrum {
    /// Top of the spectrum of `P - Pi` on mean-zero functions.
    pub rho: f64,
    /// `max(0, rho)`, usable in place of `lambda` for reversible chains.
    pub lambda_vb: f64,
}

/// Largest pair-wise detailed-balance defect `|pi_i P_ij - pi_j P_ji|`.
pub fn detailed_balance_defect(kernel: &FiniteKernel, pi: &StationaryDist) -> (usize, usize, f64) {
    let n = kernel.n_states();
    let p = kernel.matrix();
    let w = pi.as_slice();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (w[i] * p[(i, j)] - w[j] * p[(j, i)]).abs();
            if d > worst.2 {
                worst = (i, j, d);
            }
        }
    }
    worst
}

pub fn reversible_rho(kernel: &FiniteKernel, pi: &StationaryDist) -> Result<ReversibleSpectrum> {
    let n = kernel.n_states();
    pi.check_len(n)?;
    let (i, j, violation) = detailed_balance_defect(kernel, pi);
    if violation > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { i, j, violation });
    }
    if n == 1 {
        return Ok(ReversibleSpectrum { rho: 0.0, lambda_vb: 0.0 });
    }
    let s = symmetrize(kernel.matrix(), pi.as_slice());
    let s = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let rho = eig[1];
    Ok(ReversibleSpectrum {
        rho,
        lambda_vb: rho.max(0.0),
    })
}

/// Eigenvalues of the symmetrised kernel, largest first. Requires reversibility.
pub fn reversible_spectrum(kernel: &FiniteKernel, pi: &StationaryDist) -> Result<Vec<f64>> {
    reversible_rho(kernel, pi)?;
    let s = symmetrize(kernel.matrix(), pi.as_slice());
    let s = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// `Q = (1 - lambda) 1 pi' + lambda I`: refresh from `pi` with probability `1 - lambda`, else stay.
pub fn doeblin_kernel(pi: &StationaryDist, lambda: f64, f: Vec<f64>) -> Result<FiniteKernel> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda = {lambda} must lie in [0, 1)")));
    }
    let w = pi.as_slice();
    let n = w.len();
    let q = DMatrix::from_fn(n, n, |i, j| {
        let base = (1.0 - lambda) * w[j];
        if i == j {
            base + lambda
        } else {
            base
        }
    });
    FiniteKernel::from_matrix(q, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltBase {
    P,
    Q,
}

/// `T^_t = e^{t f/2} T e^{t f/2}` as a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedOperator {
    pub base: TiltBase,
    pub t: f64,
    pub matrix: DMatrix<f64>,
}

impl TiltedOperator {
    /// `L2(pi)` norm. For the Doeblin base the operator is self-adjoint and the result is
    /// cross-checked against its largest-magnitude eigenvalue.
    pub fn norm(&self, pi: &StationaryDist) -> Result<f64> {
        match self.base {
            TiltBase::P => op_norm(&self.matrix, pi),
            TiltBase::Q => self_adjoint_op_norm(&self.matrix, pi),
        }
    }
}

pub fn tilted_operator(kernel: &FiniteKernel, base: TiltBase, t: f64) -> TiltedOperator {
    let n = kernel.n_states();
    let f = kernel.f();
    let p = kernel.matrix();
    let matrix = if t == 0.0 {
        p.clone()
    } else {
        let h: Vec<f64> = f.iter().map(|v| (0.5 * t * v).exp()).collect();
        DMatrix::from_fn(n, n, |i, j| h[i] * p[(i, j)] * h[j])
    };
    TiltedOperator { base, t, matrix }
}

/// `sup_{||g||_pi = 1} ||M g||_pi`.
pub fn op_norm(m: &DMatrix<f64>, pi: &StationaryDist) -> Result<f64> {
    pi.check_len(m.nrows())?;
    Ok(largest_singular_value(symmetrize(m, pi.as_slice())))
}

/// Operator norm of an `L2(pi)`-self-adjoint matrix, computed both as a singular value and as
/// the largest-magnitude eigenvalue of the symmetrisation; disagreement is a numerical error.
pub fn self_adjoint_op_norm(m: &DMatrix<f64>, pi: &StationaryDist) -> Result<f64> {
    pi.check_len(m.nrows())?;
    let s = symmetrize(m, pi.as_slice());
    let asym = (&s - s.transpose()).abs().max();
    let scale = s.abs().max().max(1.0);
    if asym > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "operator is not self-adjoint in L2(pi): asymmetry {asym:e}"
        )));
    }
    let sv = largest_singular_value(s.clone());
    let sym = (&s + s.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if (sv - ev).abs() > SELF_ADJOINT_AGREEMENT * sv.max(1.0) {
        return Err(Error::numerical(
            "self-adjoint operator norm",
            format!("singular value {sv} vs eigenvalue {ev}"),
        ));
    }
    Ok(ev)
}
