//! Monte Carlo estimators for the minimum of a grid Gaussian vector.
//!
//! The change-of-measure estimator rests on the identity
//! `P(min X > u) = e^{-u²/(2σ²)} E[e^{-uY/σ²} 1(X_j + s_j > 0 for all j)]`
//! with `Y = Σ ν_j X_j`, `m = Σν` and `s_j = u (m_j/σ² - 1)`. The certificate
//! makes `s_j = 0` on the support of `ν` (set exactly to zero there), so for
//! full-support measures the indicator is `1(min X > 0)`.
//!
//! All estimators stream paths in fixed-size blocks; blocks run in parallel
//! and are reduced in block order, so results are bit-identical for any
//! number of worker threads and any `batch_size`. Weighted sums are kept in log-scaled
//! form so large `u` does not underflow.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::gauss_sim::{self, path_functionals, Factor, SamplerConfig};
use crate::grid::Grid;
use crate::kernels::{Kernel, KernelKind};
use crate::measure::GridMeasure;
use crate::optimizer::{self, OptimalSolution};

/// Relative certificate tolerance required before reweighting.
pub const CERT_TOL: f64 = 1e-6;
/// Below this effective sample size argmin histograms are flagged.
pub const ESS_THRESHOLD: f64 = 100.0;
/// Paths per reduction block.
const REDUCE_BLOCK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crude,
    ImportanceSampling,
    SmallBallRange,
    SmallBallZstar,
    ArgminWeighted,
    ArgminDirect,
    Mx,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateMeta {
    /// `"u"`, `"eps"` or `"x"`.
    pub param_name: &'static str,
    pub param: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// `stderr / value`, finite even when `value` underflows.
    pub rel_stderr: f64,
    /// `-inf` when nothing was hit.
    pub log_value: f64,
    pub n: usize,
    /// Paths contributing a nonzero term.
    pub hits: u64,
    pub seed: u64,
    pub stream: u64,
    pub meta: EstimateMeta,
}

impl Estimate {
    fn binomial(hits: u64, n: usize, config: &SamplerConfig, meta: EstimateMeta) -> Self {
        let p = hits as f64 / n as f64;
        let stderr = (p * (1.0 - p) / n as f64).sqrt();
        Self {
            value: p,
            stderr,
            rel_stderr: if p > 0.0 { stderr / p } else { f64::INFINITY },
            log_value: if p > 0.0 { p.ln() } else { f64::NEG_INFINITY },
            n,
            hits,
            seed: config.seed,
            stream: config.stream,
            meta,
        }
    }
}

/// Gram factor and grid shared by every estimator call.
pub struct Simulation {
    grid: Grid,
    factor: Factor,
}

impl Simulation {
    pub fn new(kernel: &Kernel, grid: &Grid, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let sigma = kernel.gram(grid)?;
        let factor = gauss_sim::factorize(&sigma, config.jitter_start, config.jitter_max)?;
        Ok(Self {
            grid: grid.clone(),
            factor,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    /// Folds every path of the configured stream into an accumulator.
    /// Reduction blocks have a fixed size so the result does not depend on
    /// `batch_size` or on the worker count.
    fn fold<A, I, F, M>(&self, config: &SamplerConfig, init: I, step: F, merge: M) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &[f64]) + Sync,
        M: Fn(&mut A, A),
    {
        config.validate()?;
        let n = config.n_paths;
        let bs = config.batch_size.min(REDUCE_BLOCK);
        let blocks = n.div_ceil(REDUCE_BLOCK);
        let parts: Vec<A> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let end = n.min((b + 1) * REDUCE_BLOCK);
                let mut first = b * REDUCE_BLOCK;
                let mut acc = init();
                while first < end {
                    let count = bs.min(end - first);
                    let batch = gauss_sim::sample_range(
                        &self.factor,
                        &self.grid,
                        config.seed,
                        config.stream,
                        first as u64,
                        count,
                    )?;
                    for p in batch.paths() {
                        step(&mut acc, p);
                    }
                    first += count;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut it = parts.into_iter();
        let mut total = it.next().unwrap_or_else(&init);
        for p in it {
            merge(&mut total, p);
        }
        Ok(total)
    }
}

/// `Σ e^{l_i}` and `Σ e^{2 l_i}` stored relative to a running maximum.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    s1: f64,
    s2: f64,
    count: u64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            count: 0,
        }
    }

    fn rescale(&mut self, max: f64) {
        if max > self.max {
            if self.count > 0 {
                let r = (self.max - max).exp();
                self.s1 *= r;
                self.s2 *= r * r;
            }
            self.max = max;
        }
    }

    fn add(&mut self, lw: f64) {
        self.rescale(lw);
        let e = (lw - self.max).exp();
        self.s1 += e;
        self.s2 += e * e;
        self.count += 1;
    }

    fn merge(&mut self, mut o: LogSum) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = o;
            return;
        }
        let m = self.max.max(o.max);
        self.rescale(m);
        o.rescale(m);
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.count += o.count;
    }

    fn ln_sum(&self) -> f64 {
        if self.count == 0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.s1.ln()
        }
    }
}

/// Per-path weight data of the change of measure for one solution.
struct Tilt {
    weights: Vec<f64>,
    /// `(m_j/σ² - 1)`, zero on the support.
    shift: Vec<f64>,
    sigma_sq: f64,
}

impl Tilt {
    fn new(kernel: &Kernel, grid: &Grid, solution: &OptimalSolution) -> Result<Self> {
        if !solution.measure.grid().matches(grid) {
            return Err(Error::GridMismatch("solution is not on the sampling grid".into()));
        }
        let sigma = kernel.gram(grid)?;
        let rep = optimizer::certify(&sigma, &solution.measure, CERT_TOL)?;
        if !rep.passed {
            return Err(Error::CertificateFailed {
                min_slack: rep.min_slack,
                max_support_violation: rep.max_support_violation,
            });
        }
        if !(rep.sigma_sq > 0.0) {
            return Err(Error::Hypothesis(
                "σ*² = 0: a convex combination of the grid values vanishes".into(),
            ));
        }
        let w = solution.weights();
        let shift = rep
            .mean
            .iter()
            .zip(w)
            .map(|(&m, &wj)| if wj > optimizer::SUPPORT_TOL { 0.0 } else { m / rep.sigma_sq - 1.0 })
            .collect();
        Ok(Self {
            weights: w.to_vec(),
            shift,
            sigma_sq: rep.sigma_sq,
        })
    }

    /// `(Y, survives, argmin of X + s)` at level `u`.
    #[inline]
    fn eval(&self, x: &[f64], u: f64) -> (f64, bool, usize) {
        let mut y = 0.0;
        let mut min = f64::INFINITY;
        let mut arg = 0;
        for j in 0..x.len() {
            y += self.weights[j] * x[j];
            let v = x[j] + u * self.shift[j];
            if v < min {
                min = v;
                arg = j;
            }
        }
        (y, min > 0.0, arg)
    }
}

fn is_estimate(acc: &LogSum, u: f64, sigma_sq: f64, n: usize, config: &SamplerConfig) -> Estimate {
    let nf = n as f64;
    let log_value = acc.ln_sum() - nf.ln() - u * u / (2.0 * sigma_sq);
    let value = log_value.exp();
    let rel_stderr = if acc.count == 0 {
        f64::INFINITY
    } else {
        let mean = acc.s1 / nf;
        let var = if n > 1 {
            ((acc.s2 - acc.s1 * acc.s1 / nf) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        (var / nf).sqrt() / mean
    };
    Estimate {
        value,
        stderr: if acc.count == 0 { 0.0 } else { value * rel_stderr },
        rel_stderr,
        log_value,
        n,
        hits: acc.count,
        seed: config.seed,
        stream: config.stream,
        meta: EstimateMeta {
            param_name: "u",
            param: u,
            method: Method::ImportanceSampling,
        },
    }
}

fn crude_meta(u: f64) -> EstimateMeta {
    EstimateMeta {
        param_name: "u",
        param: u,
        method: Method::Crude,
    }
}

/// Fraction of paths with grid minimum above `u`.
pub fn tail_crude(kernel: &Kernel, grid: &Grid, u: f64, config: &SamplerConfig) -> Result<Estimate> {
    Ok(tail_crude_sweep(kernel, grid, &[u], config)?.remove(0))
}

/// Crude estimates for every `u` from one shared set of paths.
pub fn tail_crude_sweep(kernel: &Kernel, grid: &Grid, us: &[f64], config: &SamplerConfig) -> Result<Vec<Estimate>> {
    let sim = Simulation::new(kernel, grid, config)?;
    tail_crude_sweep_with(&sim, us, config)
}

pub fn tail_crude_sweep_with(sim: &Simulation, us: &[f64], config: &SamplerConfig) -> Result<Vec<Estimate>> {
    let hits = sim.fold(
        config,
        || vec![0u64; us.len()],
        |acc, x| {
            let min = x.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            for (h, &u) in acc.iter_mut().zip(us) {
                if min > u {
                    *h += 1;
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    Ok(hits
        .into_iter()
        .zip(us)
        .map(|(h, &u)| Estimate::binomial(h, config.n_paths, config, crude_meta(u)))
        .collect())
}

/// Change-of-measure estimate of `P(min X > u)`; refuses uncertified solutions.
pub fn tail_is(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    u: f64,
    config: &SamplerConfig,
) -> Result<Estimate> {
    Ok(tail_is_sweep(kernel, grid, solution, &[u], config)?.remove(0))
}

/// Change-of-measure estimates for every `u` from one shared set of paths.
pub fn tail_is_sweep(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    us: &[f64],
    config: &SamplerConfig,
) -> Result<Vec<Estimate>> {
    let sim = Simulation::new(kernel, grid, config)?;
    tail_is_sweep_with(&sim, kernel, solution, us, config)
}

pub fn tail_is_sweep_with(
    sim: &Simulation,
    kernel: &Kernel,
    solution: &OptimalSolution,
    us: &[f64],
    config: &SamplerConfig,
) -> Result<Vec<Estimate>> {
    let tilt = Tilt::new(kernel, sim.grid(), solution)?;
    let s2 = tilt.sigma_sq;
    let accs = sim.fold(
        config,
        || vec![LogSum::new(); us.len()],
        |acc, x| {
            for (a, &u) in acc.iter_mut().zip(us) {
                let (y, ok, _) = tilt.eval(x, u);
                if ok {
                    a.add(-u * y / s2);
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y)),
    )?;
    Ok(accs
        .iter()
        .zip(us)
        .map(|(a, &u)| is_estimate(a, u, s2, config.n_paths, config))
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub enum SmallBallMode<'a> {
    /// `max_i |X_i - X_0| < eps`.
    Range,
    /// `min_i (X_i - Y) > -eps` for a certified measure.
    Zstar(&'a OptimalSolution),
}

pub fn small_ball(
    kernel: &Kernel,
    grid: &Grid,
    eps: f64,
    config: &SamplerConfig,
    mode: SmallBallMode<'_>,
) -> Result<Estimate> {
    Ok(small_ball_sweep(kernel, grid, &[eps], config, mode)?.remove(0))
}

/// Small-ball estimates for every `eps` from one shared set of paths.
pub fn small_ball_sweep(
    kernel: &Kernel,
    grid: &Grid,
    eps: &[f64],
    config: &SamplerConfig,
    mode: SmallBallMode<'_>,
) -> Result<Vec<Estimate>> {
    if eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let sim = Simulation::new(kernel, grid, config)?;
    let (weights, method) = match mode {
        SmallBallMode::Range => (None, Method::SmallBallRange),
        SmallBallMode::Zstar(sol) => {
            let tilt = Tilt::new(kernel, grid, sol)?;
            (Some(tilt.weights), Method::SmallBallZstar)
        }
    };
    let hits = sim.fold(
        config,
        || vec![0u64; eps.len()],
        |acc, x| {
            let stat = match &weights {
                None => x.iter().fold(0.0f64, |m, &v| m.max((v - x[0]).abs())),
                Some(w) => {
                    let y = path_functionals(x, w).y;
                    -x.iter().fold(f64::INFINITY, |m, &v| m.min(v - y))
                }
            };
            for (h, &e) in acc.iter_mut().zip(eps) {
                if stat < e {
                    *h += 1;
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    Ok(hits
        .into_iter()
        .zip(eps)
        .map(|(h, &e)| {
            let meta = EstimateMeta {
                param_name: "eps",
                param: e,
                method,
            };
            Estimate::binomial(h, config.n_paths, config, meta)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticPoint {
    pub u: f64,
    pub log_p: f64,
    /// `log p + u²/(2σ²)`.
    pub d: f64,
    pub rel_stderr: f64,
    pub hits: u64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    /// 95% t-interval half-width; `None` with fewer than three points.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionDiagnostic {
    pub sigma_star_sq: f64,
    pub points: Vec<DiagnosticPoint>,
    pub fit: Option<PowerFit>,
    /// Exponent predicted for this kernel family, when one is known.
    pub reference_exponent: Option<f64>,
    /// `u` values excluded because `D(u) >= 0` or nothing was hit.
    pub flagged: Vec<f64>,
}

/// Least-squares fit of `ln y = exponent * ln x + intercept`.
pub fn fit_power(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("fit needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter("fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let half_width = (lx.len() >= 3).then(|| {
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - exponent * x).powi(2))
            .sum();
        let df = n - 2.0;
        let se = (rss / df / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, df).expect("df >= 1").inverse_cdf(0.975);
        t * se
    });
    Ok(PowerFit {
        exponent,
        intercept,
        half_width,
    })
}

/// Fits `ln(-D(u))` against `ln u` for given log-probabilities.
pub fn fit_correction_exponent(us: &[f64], log_ps: &[f64], sigma_sq: f64) -> Result<PowerFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = us
        .iter()
        .zip(log_ps)
        .map(|(&u, &lp)| (u, -(lp + u * u / (2.0 * sigma_sq))))
        .filter(|&(_, negd)| negd > 0.0)
        .unzip();
    fit_power(&x, &y)
}

/// Exponent of the correction term predicted for a kernel: 2/3 for Markov
/// kernels, the lower-bound exponent `2/(α+2)` for power-exponential ones.
pub fn reference_exponent(kernel: &Kernel) -> Option<f64> {
    match kernel.kind() {
        KernelKind::PowerExponential { alpha } => Some(2.0 / (alpha + 2.0)),
        _ if kernel.is_markov() => Some(2.0 / 3.0),
        _ => None,
    }
}

/// `D(u)` for each `u` (fresh substream `stream + i` per level) and the
/// fitted correction exponent.
pub fn correction_diagnostic(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    us: &[f64],
    config: &SamplerConfig,
) -> Result<CorrectionDiagnostic> {
    if us.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("u list must be increasing".into()));
    }
    let sim = Simulation::new(kernel, grid, config)?;
    let s2 = solution.sigma_star_sq;
    let mut points = Vec::with_capacity(us.len());
    for (i, &u) in us.iter().enumerate() {
        let c = config.with_stream(config.stream + i as u64);
        let est = tail_is_sweep_with(&sim, kernel, solution, &[u], &c)?.remove(0);
        let d = est.log_value + u * u / (2.0 * s2);
        points.push(DiagnosticPoint {
            u,
            log_p: est.log_value,
            d,
            rel_stderr: est.rel_stderr,
            hits: est.hits,
            used: d < 0.0 && est.hits > 0,
        });
    }
    let flagged: Vec<f64> = points.iter().filter(|p| !p.used).map(|p| p.u).collect();
    let used: Vec<&DiagnosticPoint> = points.iter().filter(|p| p.used).collect();
    let fit = if used.len() >= 2 {
        let x: Vec<f64> = used.iter().map(|p| p.u).collect();
        let y: Vec<f64> = used.iter().map(|p| -p.d).collect();
        Some(fit_power(&x, &y)?)
    } else {
        None
    };
    Ok(CorrectionDiagnostic {
        sigma_star_sq: s2,
        points,
        fit,
        reference_exponent: reference_exponent(kernel),
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgminHistogram {
    pub measure: GridMeasure,
    /// `(Σw)² / Σw²`.
    pub ess: f64,
    /// Per-bin standard errors of the normalized weights (ratio delta method).
    pub stderr: Vec<f64>,
    pub n: usize,
    pub survivors: u64,
    pub seed: u64,
    pub stream: u64,
    pub meta: EstimateMeta,
}

impl ArgminHistogram {
    pub fn ess_ok(&self) -> bool {
        self.ess >= ESS_THRESHOLD
    }
}

/// Per-bin weighted sums sharing one scale.
#[derive(Debug, Clone)]
struct BinnedLogSum {
    max: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    count: u64,
}

impl BinnedLogSum {
    fn new(bins: usize) -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: vec![0.0; bins],
            s2: vec![0.0; bins],
            count: 0,
        }
    }

    fn rescale(&mut self, max: f64) {
        if max > self.max {
            if self.count > 0 {
                let r = (self.max - max).exp();
                self.s1.iter_mut().for_each(|v| *v *= r);
                self.s2.iter_mut().for_each(|v| *v *= r * r);
            }
            self.max = max;
        }
    }

    fn add(&mut self, bin: usize, lw: f64) {
        self.rescale(lw);
        let e = (lw - self.max).exp();
        self.s1[bin] += e;
        self.s2[bin] += e * e;
        self.count += 1;
    }

    fn merge(&mut self, mut o: Self) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = o;
            return;
        }
        let m = self.max.max(o.max);
        self.rescale(m);
        o.rescale(m);
        self.s1.iter_mut().zip(&o.s1).for_each(|(a, b)| *a += b);
        self.s2.iter_mut().zip(&o.s2).for_each(|(a, b)| *a += b);
        self.count += o.count;
    }

    fn finish(self, grid: &Grid, config: &SamplerConfig, meta: EstimateMeta) -> Result<ArgminHistogram> {
        let t1: f64 = self.s1.iter().sum();
        let t2: f64 = self.s2.iter().sum();
        if self.count == 0 || !(t1 > 0.0) {
            return Err(Error::NoSurvivors);
        }
        let p: Vec<f64> = self.s1.iter().map(|v| v / t1).collect();
        let stderr = p
            .iter()
            .zip(&self.s2)
            .map(|(&pj, &s2j)| {
                let v = s2j * (1.0 - pj).powi(2) + (t2 - s2j) * pj * pj;
                v.max(0.0).sqrt() / t1
            })
            .collect();
        Ok(ArgminHistogram {
            measure: GridMeasure::from_unnormalized(grid.clone(), self.s1)?,
            ess: t1 * t1 / t2,
            stderr,
            n: config.n_paths,
            survivors: self.count,
            seed: config.seed,
            stream: config.stream,
            meta,
        })
    }
}

/// Law of the leftmost argmin given `min X > u`, by reweighting paths with
/// `e^{-uY/σ²}` on the event `X + s > 0`.
pub fn argmin_conditional(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    u: f64,
    config: &SamplerConfig,
) -> Result<ArgminHistogram> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!("u must be >= 0, got {u}")));
    }
    let sim = Simulation::new(kernel, grid, config)?;
    let tilt = Tilt::new(kernel, grid, solution)?;
    let s2 = tilt.sigma_sq;
    let acc = sim.fold(
        config,
        || BinnedLogSum::new(grid.len()),
        |acc, x| {
            let (y, ok, arg) = tilt.eval(x, u);
            if ok {
                acc.add(arg, -u * y / s2);
            }
        },
        BinnedLogSum::merge,
    )?;
    let meta = EstimateMeta {
        param_name: "u",
        param: u,
        method: Method::ArgminWeighted,
    };
    acc.finish(grid, config, meta)
}

/// Law of the leftmost argmin given `min X > u` by plain rejection.
pub fn argmin_direct(kernel: &Kernel, grid: &Grid, u: f64, config: &SamplerConfig) -> Result<ArgminHistogram> {
    let sim = Simulation::new(kernel, grid, config)?;
    let acc = sim.fold(
        config,
        || BinnedLogSum::new(grid.len()),
        |acc, x| {
            let (min, arg) = x
                .iter()
                .enumerate()
                .fold((f64::INFINITY, 0), |(m, a), (j, &v)| if v < m { (v, j) } else { (m, a) });
            if min > u {
                acc.add(arg, 0.0);
            }
        },
        BinnedLogSum::merge,
    )?;
    let meta = EstimateMeta {
        param_name: "u",
        param: u,
        method: Method::ArgminDirect,
    };
    acc.finish(grid, config, meta)
}

/// `m_x`: law of the leftmost argmin given `Y <= x` and `min X > 0`.
pub fn mx_conditional(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    x: f64,
    config: &SamplerConfig,
) -> Result<ArgminHistogram> {
    Ok(mx_conditional_sweep(kernel, grid, solution, &[x], config)?.remove(0))
}

/// `m_x` for several `x` from one shared set of paths.
pub fn mx_conditional_sweep(
    kernel: &Kernel,
    grid: &Grid,
    solution: &OptimalSolution,
    xs: &[f64],
    config: &SamplerConfig,
) -> Result<Vec<ArgminHistogram>> {
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("x must be positive".into()));
    }
    let sim = Simulation::new(kernel, grid, config)?;
    let tilt = Tilt::new(kernel, grid, solution)?;
    let accs = sim.fold(
        config,
        || vec![BinnedLogSum::new(grid.len()); xs.len()],
        |acc, path| {
            let (y, ok, arg) = tilt.eval(path, 0.0);
            if ok {
                for (a, &x) in acc.iter_mut().zip(xs) {
                    if y <= x {
                        a.add(arg, 0.0);
                    }
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y)),
    )?;
    accs.into_iter()
        .zip(xs)
        .map(|(a, &x)| {
            let meta = EstimateMeta {
                param_name: "x",
                param: x,
                method: Method::Mx,
            };
            a.finish(grid, config, meta)
        })
        .collect()
}
