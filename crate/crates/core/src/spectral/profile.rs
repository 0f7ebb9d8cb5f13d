use serde::{Deserialize, Serialize};

use super::{FiniteKernel, StationaryDist};
use crate::error::{Error, Result};

/// Distance from an integer below which `k f` counts as sitting on the grid.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Grid(u32),
    Exact,
}

/// The law of `f` (or of its discretisation) under `pi`: positive weights on sorted levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProfile {
    weights: Vec<f64>,
    levels: Vec<f64>,
    resolution: Resolution,
}

/// `{"weights": [...], "levels": [...], "lambda": x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub weights: Vec<f64>,
    pub levels: Vec<f64>,
    pub lambda: f64,
}

impl LevelProfile {
    pub fn new(weights: Vec<f64>, levels: Vec<f64>, resolution: Resolution) -> Result<Self> {
        if weights.is_empty() || weights.len() != levels.len() {
            return Err(Error::invalid(format!(
                "profile needs matching non-empty weights/levels, got {} and {}",
                weights.len(),
                levels.len()
            )));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("weight[{i}] = {w} must be positive")));
            }
        }
        for (i, &v) in levels.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("level[{i}] = {v} outside [0, 1]")));
            }
            if i > 0 && levels[i - 1] >= v {
                return Err(Error::invalid(format!("levels not strictly increasing at index {i}")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self {
            weights,
            levels,
            resolution,
        })
    }

    pub fn from_file(file: &ProfileFile) -> Result<Self> {
        Self::new(file.weights.clone(), file.levels.clone(), Resolution::Exact)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// `sum w_i v_i`.
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.levels).map(|(w, v)| w * v).sum()
    }

    pub fn top_level(&self) -> f64 {
        *self.levels.last().expect("profile is non-empty")
    }
}

/// `ceil(k f) / k`, snapping values already on the grid so they are not pushed up a cell.
pub fn discretize(f: &[f64], k: u32) -> Vec<f64> {
    let kf = k as f64;
    f.iter()
        .map(|&v| {
            let y = v * kf;
            let r = y.round();
            let idx = if (y - r).abs() <= GRID_SNAP { r } else { y.ceil() };
            idx / kf
        })
        .collect()
}

/// Distribution of `f` (or `f_k`) under `pi`, grouped by value. Empty buckets are omitted.
pub fn level_profile(kernel: &FiniteKernel, pi: &StationaryDist, resolution: Resolution) -> Result<LevelProfile> {
    if pi.len() != kernel.n_states() {
        return Err(Error::invalid("pi length does not match kernel"));
    }
    let values = match resolution {
        Resolution::Grid(0) => return Err(Error::invalid("resolution k must be >= 1")),
        Resolution::Grid(k) => discretize(kernel.f(), k),
        Resolution::Exact => kernel.f().to_vec(),
    };
    let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(pi.as_slice().iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (v, w) in pairs {
        match levels.last() {
            Some(&last) if last == v => *weights.last_mut().unwrap() += w,
            _ => {
                levels.push(v);
                weights.push(w);
            }
        }
    }
    // absorb the normalisation rounding of pi
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    LevelProfile::new(weights, levels, resolution)
}

/// Root `r` of `F(r) = sum_i w_i (1 - lambda) e^{t v_i} / (r - lambda e^{t v_i}) = 1`.
///
/// Writing `r = s e^{t v_max}` and `u_i = e^{t (v_i - v_max)}` the equation becomes
/// `sum_i w_i (1 - lambda) u_i / (s - lambda u_i) = 1` with `s` in `(lambda, 1]`. `F` decreases
/// from `+inf` just above `lambda` to `F(1) <= 1`, with equality only when all mass sits on
/// the top level, so the root is unique. The bracket is tightened below by
/// `lambda + (1 - lambda) w_top` and bisected to the last representable bit.
pub fn solve_r(profile: &LevelProfile, lambda: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda = {lambda} must lie in [0, 1)")));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid(format!(
            "t = {t}: only non-negative tilts are supported; route lower tails through f -> 1 - f"
        )));
    }
    let vmax = profile.top_level();
    let u: Vec<f64> = profile.levels().iter().map(|v| (t * (v - vmax)).exp()).collect();
    let w = profile.weights();
    let excess = |s: f64| -> f64 {
        let total: f64 = w
            .iter()
            .zip(&u)
            .map(|(wi, ui)| wi * (1.0 - lambda) * ui / (s - lambda * ui))
            .sum();
        total - 1.0
    };
    let w_top = *w.last().unwrap();
    let mut lo = lambda + (1.0 - lambda) * w_top;
    let mut hi = 1.0;
    if lambda == 0.0 {
        let s: f64 = w.iter().zip(&u).map(|(wi, ui)| wi * ui).sum();
        return Ok(s * (t * vmax).exp());
    }
    if excess(hi) >= 0.0 {
        return Ok((t * vmax).exp());
    }
    if excess(lo) <= 0.0 {
        return Ok(lo * (t * vmax).exp());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * (t * vmax).exp())
}

/// `g_i = e^{t v_i / 2} / (r - lambda e^{t v_i})`, the positive eigenfunction of the tilted
/// Doeblin operator at eigenvalue `r`.
pub fn eigenfunction_g(profile: &LevelProfile, lambda: f64, t: f64, r: f64) -> Result<Vec<f64>> {
    let edge = lambda * (t * profile.top_level()).exp();
    if !(r > edge) {
        return Err(Error::invalid(format!(
            "r = {r} must exceed lambda e^(t v_max) = {edge}"
        )));
    }
    Ok(profile
        .levels()
        .iter()
        .map(|v| (0.5 * t * v).exp() / (r - lambda * (t * v).exp()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{theta, ChainParams, TwoStateMatrix};
    use crate::spectral::{doeblin_kernel, self_adjoint_op_norm, stationary, tilted_operator, TiltBase};
    use approx::assert_relative_eq;

    fn uniform(n: usize) -> StationaryDist {
        StationaryDist::new(vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn discretize_snaps_grid_points() {
        assert_eq!(discretize(&[0.3, 0.0, 1.0, 0.31], 10), vec![0.3, 0.0, 1.0, 0.4]);
        assert_eq!(discretize(&[0.15, 0.35, 0.85], 2), vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn profile_examples() {
        let pi = uniform(3);
        let k = doeblin_kernel(&pi, 0.2, vec![0.15, 0.35, 0.85]).unwrap();
        let prof = level_profile(&k, &pi, Resolution::Grid(2)).unwrap();
        assert_eq!(prof.levels(), &[0.5, 1.0]);
        assert_relative_eq!(prof.weights()[0], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(prof.weights()[1], 1.0 / 3.0, max_relative = 1e-14);

        let k = doeblin_kernel(&pi, 0.2, vec![0.0, 1.0, 1.0]).unwrap();
        let exact = level_profile(&k, &pi, Resolution::Exact).unwrap();
        for kk in [1, 3, 7] {
            let grid = level_profile(&k, &pi, Resolution::Grid(kk)).unwrap();
            assert_eq!(grid.levels(), exact.levels());
            assert_eq!(grid.weights(), exact.weights());
        }
    }

    #[test]
    fn profile_mean_converges() {
        let pi = StationaryDist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let f = vec![0.123, 0.456, 0.789, 0.05];
        let k = doeblin_kernel(&pi, 0.0, f.clone()).unwrap();
        let mu = pi.mean(&f);
        for kk in [1, 2, 5, 10, 100, 1000] {
            let mk = level_profile(&k, &pi, Resolution::Grid(kk)).unwrap().mean();
            assert!(mk >= mu - 1e-15);
            assert!(mk - mu <= 1.0 / kk as f64 + 1e-15);
        }
    }

    #[test]
    fn solve_r_trivial_cases() {
        let prof = LevelProfile::new(vec![0.2, 0.5, 0.3], vec![0.0, 0.4, 0.9], Resolution::Exact).unwrap();
        for l in [0.0, 0.3, 0.9] {
            assert_relative_eq!(solve_r(&prof, l, 0.0).unwrap(), 1.0, max_relative = 1e-14);
        }
        let single = LevelProfile::new(vec![1.0], vec![0.6], Resolution::Exact).unwrap();
        for l in [0.0, 0.5] {
            assert_relative_eq!(solve_r(&single, l, 1.5).unwrap(), (0.9f64).exp(), max_relative = 1e-14);
        }
        assert!(solve_r(&prof, 0.3, -1.0).is_err());
    }

    #[test]
    fn solve_r_two_level_matches_theta() {
        for &(m, l, t) in &[(0.5, 0.5, 1.0), (0.2, 0.9, 2.0), (0.8, 0.1, 0.3), (0.4, 0.0, 0.7)] {
            let prof = LevelProfile::new(vec![1.0 - m, m], vec![0.0, 1.0], Resolution::Exact).unwrap();
            let r = solve_r(&prof, l, t).unwrap();
            let th = theta(&ChainParams::new(m, l).unwrap(), t);
            assert_relative_eq!(r, th, max_relative = 1e-12);
        }
    }

    #[test]
    fn eigenfunction_examples() {
        let prof = LevelProfile::new(vec![0.2, 0.5, 0.3], vec![0.0, 0.4, 0.9], Resolution::Exact).unwrap();
        let g = eigenfunction_g(&prof, 0.3, 0.0, 1.0).unwrap();
        for v in g {
            assert_relative_eq!(v, 1.0 / 0.7, max_relative = 1e-14);
        }
        assert!(eigenfunction_g(&prof, 0.5, 1.0, 0.5 * 0.9f64.exp()).is_err());
    }

    #[test]
    fn eigenfunction_two_level_matches_pf_vector() {
        // D_t^{-1} g should be the PF right eigenvector of diag(1, e^t) M, up to scale.
        let (m, l, t) = (0.35, 0.6, 1.2);
        let params = ChainParams::new(m, l).unwrap();
        let prof = LevelProfile::new(vec![1.0 - m, m], vec![0.0, 1.0], Resolution::Exact).unwrap();
        let r = solve_r(&prof, l, t).unwrap();
        let g = eigenfunction_g(&prof, l, t, r).unwrap();
        let h = [g[0], g[1] * (0.5 * t).exp()];
        let e = TwoStateMatrix::new(params).entries;
        let et = f64::exp(t);
        let a = [[e[0][0], e[0][1]], [et * e[1][0], et * e[1][1]]];
        let th = theta(&params, t);
        // the 2x2 matrix maps h to theta h
        for i in 0..2 {
            let v = a[i][0] * h[0] + a[i][1] * h[1];
            assert_relative_eq!(v, th * h[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn eigenfunction_residual_on_state_space() {
        let pi = StationaryDist::new(vec![0.1, 0.15, 0.2, 0.25, 0.3]).unwrap();
        let f = discretize(&[0.1, 0.9, 0.33, 0.6, 0.74], 4);
        let lambda = 0.45;
        let q = doeblin_kernel(&pi, lambda, f.clone()).unwrap();
        let t = 0.8;
        let prof = level_profile(&q, &pi, Resolution::Exact).unwrap();
        let r = solve_r(&prof, lambda, t).unwrap();
        let g_levels = eigenfunction_g(&prof, lambda, t, r).unwrap();
        let g: Vec<f64> = f
            .iter()
            .map(|v| g_levels[prof.levels().iter().position(|x| x == v).unwrap()])
            .collect();
        let op = tilted_operator(&q, TiltBase::Q, t);
        for i in 0..5 {
            let qg: f64 = (0..5).map(|j| op.matrix[(i, j)] * g[j]).sum();
            assert!((qg - r * g[i]).abs() <= 1e-10);
        }
        let norm = self_adjoint_op_norm(&op.matrix, &pi).unwrap();
        assert!((norm - r).abs() <= 1e-10);
        let st = stationary(&q).unwrap();
        assert_relative_eq!(st.as_slice()[4], 0.3, max_relative = 1e-12);
    }
}
