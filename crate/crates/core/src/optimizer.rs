//! Minimization of `ν^T Σ ν` over the probability simplex.
//!
//! The optimal value is the grid analogue of the variance `σ*²` governing
//! the large-deviation rate of the minimum, and `ν` is optimal iff the mean
//! vector `m = Σν` satisfies `m_j >= σ*²` everywhere with equality on the
//! support of `ν`. Every solution carries that certificate.
//!
//! Strategy: when `θ = Σ⁻¹1` is nonnegative, `θ / Σθ_i` is optimal with
//! `σ*² = 1 / Σθ_i`. Otherwise Frank-Wolfe with away steps drives the
//! duality gap `σ² - min_j m_j` down and an active-set (Wolfe) phase on the
//! detected support finishes the solve exactly.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_LEVEL};
use crate::kernels::Kernel;
use crate::linalg;
use crate::measure::GridMeasure;

/// Default relative certificate tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Weights above this are counted in the support.
pub const SUPPORT_TOL: f64 = 1e-9;
pub const FW_MAX_ITER: usize = 100_000;
/// Gap at which Frank-Wolfe hands over to the active-set phase.
const FW_HANDOFF_GAP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Theta,
    ActiveSet,
    FrankWolfe,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalSolution {
    pub measure: GridMeasure,
    pub sigma_star_sq: f64,
    /// Mean vector `m = Σν`.
    pub certificate: Vec<f64>,
    pub support: Vec<usize>,
    pub theta: Option<Vec<f64>>,
    pub method: SolveMethod,
    /// `max(σ² - min_j m_j, 0)`.
    pub gap: f64,
    pub iterations: usize,
    /// Absolute slack of the certificate tests.
    pub floor: f64,
}

impl OptimalSolution {
    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }

    /// Uniqueness is only claimed when `θ` was strictly positive.
    pub fn unique(&self) -> bool {
        self.theta.as_ref().is_some_and(|t| t.iter().all(|&v| v > 0.0))
    }

    pub fn full_support(&self) -> bool {
        self.support.len() == self.certificate.len()
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        self.measure = self.measure.with_grid(grid)?;
        Ok(self)
    }

    pub fn report(&self, tol: f64) -> CertificateReport {
        report_from_mean(self.weights(), &self.certificate, tol, self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSolution {
    pub weights: Vec<f64>,
    pub sigma_star_sq: f64,
    pub theta: Vec<f64>,
}

/// `θ = Σ⁻¹1`; returns the normalized weights when `θ` is (numerically)
/// nonnegative, `None` when Σ is singular or `θ` has a negative entry.
pub fn solve_theta(sigma: &DMatrix<f64>) -> Option<ThetaSolution> {
    let n = sigma.nrows();
    let chol = sigma.clone().cholesky()?;
    let theta = chol.solve(&DVector::from_element(n, 1.0));
    if theta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let l1: f64 = theta.iter().map(|v| v.abs()).sum();
    if theta.iter().any(|&v| v < -1e-12 * l1) {
        return None;
    }
    let total: f64 = theta.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let weights: Vec<f64> = theta.iter().map(|&v| v.max(0.0) / total).collect();
    Some(ThetaSolution {
        weights,
        sigma_star_sq: 1.0 / total,
        theta: theta.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub mean: Vec<f64>,
    pub sigma_sq: f64,
    /// `min_j m_j - σ²`.
    pub min_slack: f64,
    /// `max_{j in support} |m_j - σ²|`.
    pub max_support_violation: f64,
    pub support: Vec<usize>,
    pub tol: f64,
    pub passed: bool,
}

/// Absolute slack added to relative tests so that `σ² = 0` (a vanishing
/// convex combination) can still be certified.
fn abs_floor(sigma: &DMatrix<f64>) -> f64 {
    1e-13 * linalg::max_diagonal(sigma)
}

fn report_from_mean(weights: &[f64], mean: &[f64], tol: f64, floor: f64) -> CertificateReport {
    let sigma_sq: f64 = weights.iter().zip(mean).map(|(w, m)| w * m).sum();
    let min_slack = mean.iter().fold(f64::INFINITY, |a, &m| a.min(m - sigma_sq));
    let support: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] > SUPPORT_TOL).collect();
    let max_support_violation = support
        .iter()
        .fold(0.0f64, |a, &j| a.max((mean[j] - sigma_sq).abs()));
    let passed = sigma_sq >= 0.0
        && min_slack >= -(tol * sigma_sq + floor)
        && max_support_violation <= tol * sigma_sq + floor;
    CertificateReport {
        mean: mean.to_vec(),
        sigma_sq,
        min_slack,
        max_support_violation,
        support,
        tol,
        passed,
    }
}

/// Checks `m_j >= σ²` everywhere and `m_j = σ²` on the support, both to
/// relative tolerance `tol`.
pub fn certify(sigma: &DMatrix<f64>, measure: &GridMeasure, tol: f64) -> Result<CertificateReport> {
    if sigma.nrows() != measure.weights().len() || sigma.ncols() != sigma.nrows() {
        return Err(Error::GridMismatch(format!(
            "{}x{} matrix for a measure on {} points",
            sigma.nrows(),
            sigma.ncols(),
            measure.weights().len()
        )));
    }
    let mean = linalg::mat_vec(sigma, measure.weights());
    Ok(report_from_mean(measure.weights(), &mean, tol, abs_floor(sigma)))
}

fn argmin_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = j;
        }
    }
    best
}

struct FwState {
    x: Vec<f64>,
    m: Vec<f64>,
    iterations: usize,
}

impl FwState {
    fn objective(&self) -> f64 {
        self.x.iter().zip(&self.m).map(|(a, b)| a * b).sum()
    }

    fn gap(&self) -> f64 {
        let f = self.objective();
        (f - self.m[argmin_lowest(&self.m)]).max(0.0)
    }
}

/// Away-step Frank-Wolfe with exact line search until both the Frank-Wolfe
/// gap and the away gap reach `target` (relative) or `budget` iterations
/// are spent.
fn frank_wolfe(sigma: &DMatrix<f64>, state: &mut FwState, target: f64, budget: usize) {
    let n = state.x.len();
    let floor = abs_floor(sigma);
    for _ in 0..budget {
        if state.iterations % 1000 == 999 {
            state.m = linalg::mat_vec(sigma, &state.x);
        }
        let f = state.objective();
        let s = argmin_lowest(&state.m);
        let fw_gap = f - state.m[s];
        let mut v = usize::MAX;
        for j in 0..n {
            if state.x[j] > 0.0 && (v == usize::MAX || state.m[j] > state.m[v]) {
                v = j;
            }
        }
        let away_gap = state.m[v] - f;
        if fw_gap.max(away_gap) <= target * f + floor {
            return;
        }
        state.iterations += 1;
        if fw_gap >= away_gap {
            let curv = sigma[(s, s)] - 2.0 * state.m[s] + f;
            let gamma = if curv > 0.0 { (fw_gap / curv).min(1.0) } else { 1.0 };
            for j in 0..n {
                state.x[j] *= 1.0 - gamma;
                state.m[j] = (1.0 - gamma) * state.m[j] + gamma * sigma[(j, s)];
            }
            state.x[s] += gamma;
        } else {
            let xv = state.x[v];
            let gamma_max = xv / (1.0 - xv);
            let curv = f - 2.0 * state.m[v] + sigma[(v, v)];
            let gamma = if curv > 0.0 {
                (away_gap / curv).min(gamma_max)
            } else {
                gamma_max
            };
            for j in 0..n {
                state.x[j] *= 1.0 + gamma;
                state.m[j] = (1.0 + gamma) * state.m[j] - gamma * sigma[(j, v)];
            }
            state.x[v] -= gamma;
            if gamma >= gamma_max {
                state.x[v] = 0.0;
            }
        }
    }
}

/// Minimizer of `z^T Σ_SS z` subject to `Σ z = 1` (sign unconstrained).
fn affine_minimizer(sigma: &DMatrix<f64>, set: &[usize]) -> Option<Vec<f64>> {
    let s = set.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            kkt[(a, b)] = sigma[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let scale = linalg::max_diagonal(sigma).max(1.0);
    let accept = |sol: &DVector<f64>| {
        sol.iter().all(|v| v.is_finite())
            && (&kkt * sol - &rhs).amax() <= 1e-10 * scale * sol.amax().max(1.0)
    };
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(x) if accept(&x) => x,
        // singular Σ_SS: the system is still consistent; take the
        // minimum-norm solution
        _ => {
            let x = kkt.clone().svd(true, true).solve(&rhs, 1e-12 * scale).ok()?;
            if !accept(&x) {
                return None;
            }
            x
        }
    };
    Some(sol.iter().take(s).copied().collect())
}

/// Wolfe's active-set iteration in the Σ metric, warm-started on the
/// support of `x`. Returns `None` on a degenerate (affinely dependent) set.
fn active_set_polish(sigma: &DMatrix<f64>, x0: &[f64]) -> Option<(Vec<f64>, usize)> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut set: Vec<usize> = (0..n).filter(|&j| x[j] > 0.0).collect();
    let mut steps = 0;
    for _major in 0..(4 * n + 50) {
        for _minor in 0..=n {
            steps += 1;
            let z = affine_minimizer(sigma, &set)?;
            if z.iter().all(|&v| v > 0.0) {
                for (&j, &v) in set.iter().zip(&z) {
                    x[j] = v;
                }
                break;
            }
            let mut t = 1.0f64;
            for (&j, &zj) in set.iter().zip(&z) {
                if zj <= 0.0 {
                    let denom = x[j] - zj;
                    if denom > 0.0 {
                        t = t.min(x[j] / denom);
                    }
                }
            }
            for (&j, &zj) in set.iter().zip(&z) {
                x[j] += t * (zj - x[j]);
            }
            let floor = 1e-15;
            let before = set.len();
            set.retain(|&j| x[j] > floor);
            if set.len() == before {
                // guarantee progress: drop the blocking coordinate
                let (pos, _) = set
                    .iter()
                    .enumerate()
                    .min_by(|a, b| x[*a.1].total_cmp(&x[*b.1]))?;
                set.remove(pos);
            }
            for j in 0..n {
                if !set.contains(&j) {
                    x[j] = 0.0;
                }
            }
            if set.is_empty() {
                return None;
            }
            let total: f64 = set.iter().map(|&j| x[j]).sum();
            for &j in &set {
                x[j] /= total;
            }
        }
        let m = linalg::mat_vec(sigma, &x);
        let f: f64 = x.iter().zip(&m).map(|(a, b)| a * b).sum();
        let j = argmin_lowest(&m);
        if m[j] >= f * (1.0 - 1e-13) || set.contains(&j) {
            return Some((x, steps));
        }
        set.push(j);
        set.sort_unstable();
    }
    None
}

fn finish(
    sigma: &DMatrix<f64>,
    mut weights: Vec<f64>,
    theta: Option<Vec<f64>>,
    method: SolveMethod,
    iterations: usize,
) -> Result<OptimalSolution> {
    for w in &mut weights {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let measure = GridMeasure::from_unnormalized(Grid::indices(weights.len()), weights)?;
    let mean = linalg::mat_vec(sigma, measure.weights());
    let floor = abs_floor(sigma);
    let rep = report_from_mean(measure.weights(), &mean, DEFAULT_TOL, floor);
    Ok(OptimalSolution {
        sigma_star_sq: rep.sigma_sq,
        gap: (-rep.min_slack).max(0.0),
        support: rep.support,
        certificate: mean,
        measure,
        theta,
        method,
        iterations,
        floor,
    })
}

fn passes(sol: &OptimalSolution, tol: f64) -> bool {
    sol.report(tol).passed
}

/// Solves the simplex QP to relative certificate tolerance `tol`. The
/// returned measure lives on the index grid `0..n`; see [`solve_on_grid`].
pub fn solve_simplex_qp(sigma: &DMatrix<f64>, tol: f64) -> Result<OptimalSolution> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(Error::InvalidParameter("Gram matrix must be square and non-empty".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    linalg::check_symmetric(sigma)?;
    linalg::check_psd(sigma)?;

    if let Some(th) = solve_theta(sigma) {
        let sol = finish(sigma, th.weights, Some(th.theta), SolveMethod::Theta, 0)?;
        if passes(&sol, tol) {
            return Ok(sol);
        }
    }

    let start = argmin_lowest(&sigma.diagonal().iter().copied().collect::<Vec<_>>());
    let mut x = vec![0.0; n];
    x[start] = 1.0;
    let mut state = FwState {
        m: linalg::mat_vec(sigma, &x),
        x,
        iterations: 0,
    };
    frank_wolfe(sigma, &mut state, FW_HANDOFF_GAP.max(tol), FW_MAX_ITER);
    if let Some((x, steps)) = active_set_polish(sigma, &state.x) {
        let sol = finish(sigma, x, None, SolveMethod::ActiveSet, state.iterations + steps)?;
        if passes(&sol, tol) {
            return Ok(sol);
        }
    }
    let remaining = FW_MAX_ITER.saturating_sub(state.iterations);
    frank_wolfe(sigma, &mut state, tol, remaining);
    if let Some((x, steps)) = active_set_polish(sigma, &state.x) {
        let sol = finish(sigma, x, None, SolveMethod::ActiveSet, state.iterations + steps)?;
        if passes(&sol, tol) {
            return Ok(sol);
        }
    }
    let gap = state.gap();
    let sol = finish(sigma, state.x, None, SolveMethod::FrankWolfe, state.iterations)?;
    if passes(&sol, tol) {
        Ok(sol)
    } else {
        Err(Error::NotConverged {
            gap,
            best: Box::new(sol),
        })
    }
}

/// Builds the Gram matrix on `grid` and solves on it.
pub fn solve_on_grid(kernel: &Kernel, grid: &Grid, tol: f64) -> Result<OptimalSolution> {
    let sigma = kernel.gram(grid)?;
    solve_simplex_qp(&sigma, tol)?.with_grid(grid.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementLevel {
    pub k: Option<u32>,
    pub sigma_star_sq: f64,
    pub solution: OptimalSolution,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementTrace {
    pub levels: Vec<RefinementLevel>,
    pub converged: bool,
    /// Last decrease `σ²_{k-1} - σ²_k`; 0 for a single level.
    pub final_gap: f64,
}

impl RefinementTrace {
    /// `σ²_k` nonincreasing within `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].sigma_star_sq <= w[0].sigma_star_sq + slack)
    }

    pub fn last(&self) -> &RefinementLevel {
        self.levels.last().expect("trace is never empty")
    }
}

/// Solves on dyadic grids `k_min..=k_max`, stopping once the decrease
/// between consecutive levels drops below `stop_tol`.
pub fn refine(
    kernel: &Kernel,
    interval: (f64, f64),
    k_min: u32,
    k_max: u32,
    stop_tol: f64,
) -> Result<RefinementTrace> {
    refine_with_tol(kernel, interval, k_min, k_max, stop_tol, DEFAULT_TOL)
}

pub fn refine_with_tol(
    kernel: &Kernel,
    interval: (f64, f64),
    k_min: u32,
    k_max: u32,
    stop_tol: f64,
    tol: f64,
) -> Result<RefinementTrace> {
    if let Some(grid) = kernel.natural_grid() {
        let t0 = Instant::now();
        let solution = solve_on_grid(kernel, &grid, tol)?;
        return Ok(RefinementTrace {
            levels: vec![RefinementLevel {
                k: None,
                sigma_star_sq: solution.sigma_star_sq,
                solution,
                wall_time: t0.elapsed().as_secs_f64(),
            }],
            converged: true,
            final_gap: 0.0,
        });
    }
    if k_min > k_max || k_max > MAX_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "need k_min <= k_max <= {MAX_LEVEL}, got {k_min}..{k_max}"
        )));
    }
    let mut levels: Vec<RefinementLevel> = Vec::new();
    let mut converged = false;
    let mut final_gap = 0.0;
    for k in k_min..=k_max {
        let t0 = Instant::now();
        let wrap = |e: Error| Error::Refine { k, source: Box::new(e) };
        let grid = Grid::dyadic(interval.0, interval.1, k).map_err(wrap)?;
        let solution = solve_on_grid(kernel, &grid, tol).map_err(wrap)?;
        let level = RefinementLevel {
            k: Some(k),
            sigma_star_sq: solution.sigma_star_sq,
            solution,
            wall_time: t0.elapsed().as_secs_f64(),
        };
        let decrease = levels.last().map(|p| p.sigma_star_sq - level.sigma_star_sq);
        levels.push(level);
        if let Some(d) = decrease {
            final_gap = d;
            if d < stop_tol {
                converged = true;
                break;
            }
        }
    }
    Ok(RefinementTrace {
        levels,
        converged,
        final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ScaleFunction;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn theta_examples() {
        let t = solve_theta(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(t.weights, vec![0.5, 0.5]);
        assert_eq!(t.sigma_star_sq, 0.5);
        let t = solve_theta(&m2(1.0, 0.5, 1.0)).unwrap();
        assert_relative_eq!(t.weights[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(t.sigma_star_sq, 0.75, epsilon = 1e-15);
        assert!(solve_theta(&DMatrix::from_element(2, 2, 1.0)).is_none());
        // negative θ component: strongly correlated with unequal variances
        assert!(solve_theta(&m2(1.0, 0.6, 0.5)).is_none());
    }

    #[test]
    fn theta_ou_level6() {
        let g = Grid::dyadic(0.0, 1.0, 6).unwrap();
        let sigma = Kernel::ornstein_uhlenbeck().gram(&g).unwrap();
        let t = solve_theta(&sigma).unwrap();
        assert!(t.theta.iter().all(|&v| v > 0.0));
        assert!(t.sigma_star_sq >= 2.0 / 3.0 && t.sigma_star_sq - 2.0 / 3.0 < 5e-3);
    }

    #[test]
    fn vanishing_optimum_is_certified() {
        // X_1 = -X_0, so (X_0 + X_1)/2 = 0
        let s = solve_simplex_qp(&m2(1.0, -1.0, 1.0), DEFAULT_TOL).unwrap();
        assert!(s.sigma_star_sq.abs() < 1e-12);
        assert_relative_eq!(s.weights()[0], 0.5, epsilon = 1e-9);
        assert!(s.report(1e-6).passed);
        // rank-one factor vectors whose hull contains the origin
        let a = DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let s = solve_simplex_qp(&(&a * a.transpose()), DEFAULT_TOL).unwrap();
        assert!(s.sigma_star_sq.abs() < 1e-12);
        assert!(s.report(1e-6).passed);
    }

    #[test]
    fn simplex_examples() {
        let s = solve_simplex_qp(&DMatrix::from_element(1, 1, 2.5), DEFAULT_TOL).unwrap();
        assert_eq!(s.weights(), &[1.0]);
        assert_eq!(s.sigma_star_sq, 2.5);

        // closed-form interior optimum w* = (Σ11-Σ12)/(Σ11+Σ22-2Σ12)
        let sigma = m2(1.0, 0.9, 4.0);
        let w = (1.0 - 0.9) / (1.0 + 4.0 - 1.8);
        let s = solve_simplex_qp(&sigma, DEFAULT_TOL).unwrap();
        assert_relative_eq!(s.weights()[1], w, epsilon = 1e-12);
        assert_relative_eq!(s.weights()[0], 0.968_75, epsilon = 1e-12);
        assert_relative_eq!(s.sigma_star_sq, 0.996_875, epsilon = 1e-12);
    }

    #[test]
    fn boundary_optimum_uses_fallback() {
        // θ has a negative entry; optimum is the vertex of the smaller variance
        let sigma = m2(1.0, 0.6, 0.5);
        let s = solve_simplex_qp(&sigma, DEFAULT_TOL).unwrap();
        assert_eq!(s.method, SolveMethod::ActiveSet);
        assert_eq!(s.weights(), &[0.0, 1.0]);
        assert_eq!(s.sigma_star_sq, 0.5);
        assert!(s.report(1e-12).passed);

        let s = solve_simplex_qp(&DMatrix::from_element(2, 2, 1.0), DEFAULT_TOL).unwrap();
        assert_relative_eq!(s.sigma_star_sq, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_exponential_full_support() {
        let g = Grid::dyadic(0.0, 1.0, 5).unwrap();
        let k = Kernel::power_exponential(0.5).unwrap();
        let s = solve_on_grid(&k, &g, DEFAULT_TOL).unwrap();
        assert!(s.weights().iter().all(|&w| w > 0.0));
        assert!(s.full_support() && s.unique());
        let rep = s.report(1e-10);
        assert!(rep.passed, "{rep:?}");
        let th = solve_theta(&k.gram(&g).unwrap()).unwrap();
        assert_relative_eq!(th.sigma_star_sq, s.sigma_star_sq, epsilon = 1e-14);
    }

    #[test]
    fn certify_examples() {
        let id = DMatrix::identity(2, 2);
        let nu = GridMeasure::new(Grid::indices(2), vec![0.5, 0.5]).unwrap();
        let r = certify(&id, &nu, 1e-12).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_slack, 0.0);
        assert_eq!(r.max_support_violation, 0.0);

        let wrong = GridMeasure::dirac(Grid::indices(2), 0).unwrap();
        let r = certify(&m2(1.0, 0.5, 1.0), &wrong, 1e-6).unwrap();
        assert_eq!(r.max_support_violation, 0.0);
        assert_relative_eq!(r.min_slack, 0.5 - 1.0);
        assert!(!r.passed);

        assert!(certify(&DMatrix::identity(3, 3), &nu, 1e-6).is_err());
    }

    #[test]
    fn certify_refined_ou() {
        let g = Grid::dyadic(0.0, 1.0, 6).unwrap();
        let k = Kernel::ornstein_uhlenbeck();
        let s = solve_on_grid(&k, &g, DEFAULT_TOL).unwrap();
        assert!(certify(&k.gram(&g).unwrap(), &s.measure, 1e-6).unwrap().passed);
    }

    #[test]
    fn refine_ou_and_explicit() {
        let t = refine(&Kernel::ornstein_uhlenbeck(), (0.0, 1.0), 2, 8, 1e-5).unwrap();
        assert!(t.is_monotone(1e-10));
        let last = t.last().sigma_star_sq;
        assert!((2.0 / 3.0..=2.0 / 3.0 + 5e-3).contains(&last), "{last}");

        let k = Kernel::explicit_gram(m2(1.0, 0.2, 1.0), None).unwrap();
        let t = refine(&k, (0.0, 1.0), 2, 8, 1e-5).unwrap();
        assert_eq!(t.levels.len(), 1);
        assert!(t.converged);

        assert!(refine(&Kernel::ornstein_uhlenbeck(), (0.0, 1.0), 2, 13, 0.0).is_err());
    }

    #[test]
    fn refine_power_exponential_strictly_decreasing() {
        let t = refine(&Kernel::power_exponential(0.5).unwrap(), (0.0, 1.0), 2, 8, 0.0).unwrap();
        assert_eq!(t.levels.len(), 7);
        for w in t.levels.windows(2) {
            assert!(w[1].sigma_star_sq < w[0].sigma_star_sq);
        }
    }

    #[test]
    fn refine_modulated_brownian() {
        let k = Kernel::modulated_brownian(ScaleFunction::Power(0.5), 1.0, 4.0).unwrap();
        let t = refine(&k, (1.0, 4.0), 2, 8, 0.0).unwrap();
        assert!(t.is_monotone(1e-10));
        // limit 1 / (1 + ln(4)/4)
        let limit = 1.0 / (1.0 + 4f64.ln() / 4.0);
        assert!(t.last().sigma_star_sq >= limit - 1e-9);
        assert!(t.last().sigma_star_sq - limit < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_simplex_qp(&DMatrix::zeros(0, 0), 1e-8).is_err());
        assert!(solve_simplex_qp(&m2(1.0, 2.0, 1.0), 1e-8).is_err());
        assert!(solve_simplex_qp(&DMatrix::identity(2, 2), 0.0).is_err());
    }
}
