//! Analytic optimal measures.
//!
//! For the modulated Brownian kernel `R(s,t) = min(s,t) / (g(s) g(t))` with
//! `g` positive, concave and nondecreasing, the measure
//! `μ = p_a δ_a + p_b δ_b + (-g g'') dx` has mean function identically 1,
//! so `μ / |μ|` is optimal and `σ*² = 1 / |μ|`. When `h(x) = g(x) - x g'(x)`
//! is negative at `a`, the left atom disappears and the support starts at
//! the root `a₀` of `h`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind, ScaleFunction};
use crate::measure::{self, Density, DensityShape, MixedMeasure, DEFAULT_PANELS};

/// Mesh used for hypothesis checks and the mean-function identity.
pub const CHECK_MESH: usize = 512;
/// Tolerance of the mean-function identity and the energy cross-check.
pub const IDENTITY_TOL: f64 = 1e-5;
const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TbmCase {
    A,
    B,
}

#[derive(Debug, Clone, Serialize)]
pub struct TbmMeasure {
    /// Unnormalized `μ` with mean function 1.
    pub measure: MixedMeasure,
    pub case: TbmCase,
    pub a0: Option<f64>,
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("need a < b, got [{a}, {b}]")))
    }
}

fn mesh(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// `2 / (2 + b - a)`.
pub fn ou_sigma_star_sq(a: f64, b: f64) -> f64 {
    2.0 / (2.0 + b - a)
}

/// Atoms `1/(2+b-a)` at both endpoints plus `(b-a)/(2+b-a)` spread uniformly.
pub fn ou_measure(a: f64, b: f64) -> Result<MixedMeasure> {
    check_interval(a, b)?;
    let w = 1.0 / (2.0 + b - a);
    MixedMeasure::new(
        a,
        b,
        vec![(a, w), (b, w)],
        Some(Density::new(a, b, DensityShape::Uniform { level: w })),
    )
}

fn h(g: &ScaleFunction, x: f64) -> f64 {
    g.g(x) - x * g.dg(x)
}

/// Root of `h` on `(lo, hi)` given `h(lo) < 0 <= h(hi)`.
fn bisect_a0(g: &ScaleFunction, mut lo: f64, mut hi: f64) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..ROOT_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let v = h(g, mid);
        if v.abs() <= ROOT_TOL {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

pub fn tbm_measure(g: &ScaleFunction, a: f64, b: f64) -> Result<TbmMeasure> {
    check_interval(a, b)?;
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("need a > 0, got {a}")));
    }
    if !g.contains(a, b) {
        return Err(Error::Domain {
            point: a,
            lo: g.domain().0,
            hi: g.domain().1,
        });
    }
    let scale = g.g(b).abs().max(g.g(a).abs()).max(1.0);
    let mut f_max = 0.0f64;
    for x in mesh(a, b, CHECK_MESH) {
        let gx = g.g(x);
        if !(gx > 0.0) {
            return Err(Error::Hypothesis(format!("g({x}) = {gx} is not positive")));
        }
        let f = -gx * g.d2g(x);
        if f < -1e-12 * scale * scale {
            return Err(Error::Hypothesis(format!(
                "g is not concave: -g g'' = {f} at {x}"
            )));
        }
        f_max = f_max.max(f);
    }

    let ha = h(g, a);
    let (case, a0, start) = if ha >= 0.0 {
        (TbmCase::A, None, a)
    } else {
        let hb = h(g, b);
        if hb < 0.0 {
            return Err(Error::Hypothesis(format!(
                "g - x g' is negative at both ends (h(a) = {ha}, h(b) = {hb})"
            )));
        }
        let a0 = bisect_a0(g, a, b);
        (TbmCase::B, Some(a0), a0)
    };
    for x in mesh(start, b, CHECK_MESH) {
        let d = g.dg(x);
        if d < -1e-12 * scale {
            return Err(Error::Hypothesis(format!("g is decreasing: g'({x}) = {d}")));
        }
    }

    let mut atoms = vec![(b, g.g(b) * g.dg(b))];
    if case == TbmCase::A {
        atoms.insert(0, (a, g.g(a) / a * ha));
    }
    let density = (f_max > 0.0 && start < b)
        .then(|| Density::new(start, b, DensityShape::NegGg2 { g: g.clone() }));
    let measure = MixedMeasure::new(a, b, atoms, density)?;
    Ok(TbmMeasure { measure, case, a0 })
}

/// `μ_α = α(1-α) x^{2α-2} dx + (1-α) a^{2α-1} δ_a + α b^{2α-1} δ_b`.
pub fn power_law_measure(alpha: f64, a: f64, b: f64) -> Result<MixedMeasure> {
    check_interval(a, b)?;
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("need a > 0, got {a}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let e = 2.0 * alpha - 1.0;
    MixedMeasure::new(
        a,
        b,
        vec![(a, (1.0 - alpha) * a.powf(e)), (b, alpha * b.powf(e))],
        Some(Density::new(
            a,
            b,
            DensityShape::Power {
                coef: alpha * (1.0 - alpha),
                exponent: 2.0 * alpha - 2.0,
            },
        )),
    )
}

/// Largest `|m(t) - 1|` over a mesh of `[lo, hi]`.
pub fn mean_deviation(kernel: &Kernel, mu: &MixedMeasure, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<f64> = mesh(lo, hi, CHECK_MESH).collect();
    let m = measure::mean_function(kernel, mu, &pts, DEFAULT_PANELS)?;
    Ok(m.iter().fold(0.0f64, |acc, v| acc.max((v - 1.0).abs())))
}

/// `σ*² = 1 / |μ|`, after checking that `m ≡ 1` on `[support start, b]`
/// and that the energy of `μ / |μ|` agrees.
pub fn sigma_star_from_mu(kernel: &Kernel, mu: &MixedMeasure) -> Result<f64> {
    let (_, b) = mu.interval();
    let dev = mean_deviation(kernel, mu, mu.support_start(), b)?;
    if !(dev <= IDENTITY_TOL) {
        return Err(Error::Hypothesis(format!(
            "mean function deviates from 1 by {dev:.3e} on the support"
        )));
    }
    let sigma = 1.0 / mu.total_mass();
    let e = measure::energy(kernel, &measure::normalize(mu)?, DEFAULT_PANELS)?;
    if !((e - sigma).abs() <= IDENTITY_TOL) {
        return Err(Error::Hypothesis(format!(
            "energy {e} disagrees with 1/mass {sigma}"
        )));
    }
    Ok(sigma)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticSolution {
    /// Normalized optimal measure.
    pub measure: MixedMeasure,
    pub case: Option<TbmCase>,
    pub a0: Option<f64>,
    /// Mass of the mean-one representative `μ`.
    pub total_mass: f64,
    pub sigma_star_sq: f64,
}

/// Closed-form optimum for the kernels that have one.
pub fn analytic(kernel: &Kernel, interval: (f64, f64)) -> Result<AnalyticSolution> {
    let (a, b) = interval;
    match kernel.kind() {
        KernelKind::OrnsteinUhlenbeck => {
            let nu = ou_measure(a, b)?;
            let sigma = ou_sigma_star_sq(a, b);
            let mu = nu.scaled(1.0 / sigma);
            let checked = sigma_star_from_mu(kernel, &mu)?;
            Ok(AnalyticSolution {
                measure: nu,
                case: None,
                a0: None,
                total_mass: mu.total_mass(),
                sigma_star_sq: checked,
            })
        }
        KernelKind::ModulatedBrownian { g, .. } => {
            kernel.check_point(a)?;
            kernel.check_point(b)?;
            let t = tbm_measure(g, a, b)?;
            let sigma = sigma_star_from_mu(kernel, &t.measure)?;
            Ok(AnalyticSolution {
                measure: measure::normalize(&t.measure)?,
                case: Some(t.case),
                a0: t.a0,
                total_mass: t.measure.total_mass(),
                sigma_star_sq: sigma,
            })
        }
        _ => Err(Error::InvalidParameter(
            "closed forms exist only for the ou and modulated_bm kernels".into(),
        )),
    }
}
