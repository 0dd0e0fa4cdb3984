//! Covariance function families and Gram matrices.
//!
//! Supported families: the Ornstein-Uhlenbeck kernel `exp(-|s-t|)`, the
//! power-exponential kernel `exp(-|s-t|^alpha)`, Brownian motion modulated
//! by a scale function `X(t) = B(t) / g(t)` with covariance
//! `min(s,t) / (g(s) g(t))`, and an explicit Gram matrix on a fixed point set.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;

/// Relative slack for domain membership checks at interval endpoints.
const DOMAIN_SLACK: f64 = 1e-12;

/// Scale function `g` of a modulated Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFunction {
    /// `g(t) = t^alpha`.
    Power(f64),
    /// `g(t) = sqrt(t - c)` on `t > c`.
    ShiftedRoot(f64),
    /// Nodal values of `g, g', g''`.
    Tabulated(Table),
}

/// Tabulated scale function. `g` is interpolated by a monotone piecewise
/// cubic (Fritsch-Carlson); `g'` and `g''` are piecewise linear through the
/// stored nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSpec", into = "TableSpec")]
pub struct Table {
    x: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
    d2g: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableSpec {
    x: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
    d2g: Vec<f64>,
}

impl TryFrom<TableSpec> for Table {
    type Error = Error;

    fn try_from(spec: TableSpec) -> Result<Self> {
        Table::new(spec.x, spec.g, spec.dg, spec.d2g)
    }
}

impl From<Table> for TableSpec {
    fn from(t: Table) -> Self {
        TableSpec {
            x: t.x,
            g: t.g,
            dg: t.dg,
            d2g: t.d2g,
        }
    }
}

impl Table {
    pub fn new(x: Vec<f64>, g: Vec<f64>, dg: Vec<f64>, d2g: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || g.len() != n || dg.len() != n || d2g.len() != n {
            return Err(Error::InvalidParameter(
                "tabulated scale function needs >= 2 nodes and equal-length columns".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "tabulated nodes must be strictly increasing".into(),
            ));
        }
        if g.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "tabulated g must be positive and finite".into(),
            ));
        }
        let slopes = pchip_slopes(&x, &g);
        Ok(Self {
            x,
            g,
            dg,
            d2g,
            slopes,
        })
    }

    /// The constant function `g = value` on `[lo, hi]`.
    pub fn constant(value: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![value; 2], vec![0.0; 2], vec![0.0; 2])
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&p| p <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    fn value(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        self.g[i]
            + h01 * (self.g[i + 1] - self.g[i])
            + h * (h10 * self.slopes[i] + h11 * self.slopes[i + 1])
    }

    fn linear(&self, col: &[f64], t: f64) -> f64 {
        let i = self.locate(t);
        let s = (t - self.x[i]) / (self.x[i + 1] - self.x[i]);
        col[i] + s * (col[i + 1] - col[i])
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

impl ScaleFunction {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power scale exponent must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Self::Power(alpha))
    }

    pub fn shifted_root(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shifted root offset must be >= 0, got {c}"
            )));
        }
        Ok(Self::ShiftedRoot(c))
    }

    /// Open or closed domain endpoints `(lo, hi)`; `lo` is excluded for the
    /// analytic families.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::Power(_) => (0.0, f64::INFINITY),
            Self::ShiftedRoot(c) => (*c, f64::INFINITY),
            Self::Tabulated(t) => (t.x[0], t.x[t.x.len() - 1]),
        }
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        let (dlo, dhi) = self.domain();
        match self {
            Self::Tabulated(_) => {
                let slack = DOMAIN_SLACK * dlo.abs().max(dhi.abs()).max(1.0);
                lo >= dlo - slack && hi <= dhi + slack
            }
            _ => lo > dlo && hi <= dhi,
        }
    }

    pub fn g(&self, t: f64) -> f64 {
        match self {
            Self::Power(a) => t.powf(*a),
            Self::ShiftedRoot(c) => (t - c).sqrt(),
            Self::Tabulated(tab) => tab.value(t),
        }
    }

    pub fn dg(&self, t: f64) -> f64 {
        match self {
            Self::Power(a) => a * t.powf(a - 1.0),
            Self::ShiftedRoot(c) => 0.5 / (t - c).sqrt(),
            Self::Tabulated(tab) => tab.linear(&tab.dg, t),
        }
    }

    pub fn d2g(&self, t: f64) -> f64 {
        match self {
            Self::Power(a) => a * (a - 1.0) * t.powf(a - 2.0),
            Self::ShiftedRoot(c) => -0.25 * (t - c).powf(-1.5),
            Self::Tabulated(tab) => tab.linear(&tab.d2g, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    OrnsteinUhlenbeck,
    PowerExponential { alpha: f64 },
    ModulatedBrownian { g: ScaleFunction, a: f64, b: f64 },
    ExplicitGram { matrix: DMatrix<f64>, points: Vec<f64> },
}

/// A covariance function. Construct through the checked constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
}

impl Kernel {
    pub fn ornstein_uhlenbeck() -> Self {
        Self {
            kind: KernelKind::OrnsteinUhlenbeck,
        }
    }

    pub fn power_exponential(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power-exponential alpha must lie in (0,1], got {alpha}"
            )));
        }
        Ok(Self {
            kind: KernelKind::PowerExponential { alpha },
        })
    }

    pub fn modulated_brownian(g: ScaleFunction, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < b && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "modulated Brownian support needs 0 < a < b, got [{a}, {b}]"
            )));
        }
        if !g.contains(a, b) {
            return Err(Error::InvalidParameter(format!(
                "scale function not defined on [{a}, {b}]"
            )));
        }
        Ok(Self {
            kind: KernelKind::ModulatedBrownian { g, a, b },
        })
    }

    /// Explicit Gram matrix attached to `points` (defaults to `0..n`).
    pub fn explicit_gram(matrix: DMatrix<f64>, points: Option<Vec<f64>>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidParameter("Gram matrix must be square and non-empty".into()));
        }
        let points = points.unwrap_or_else(|| (0..n).map(|i| i as f64).collect());
        if points.len() != n {
            return Err(Error::InvalidParameter(format!(
                "Gram matrix is {n}x{n} but {} points were given",
                points.len()
            )));
        }
        Grid::from_points(points.clone())?;
        linalg::check_symmetric(&matrix)?;
        linalg::check_psd(&matrix)?;
        Ok(Self {
            kind: KernelKind::ExplicitGram { matrix, points },
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Closed support interval, `None` when the kernel is defined on all of R.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match &self.kind {
            KernelKind::OrnsteinUhlenbeck | KernelKind::PowerExponential { .. } => None,
            KernelKind::ModulatedBrownian { a, b, .. } => Some((*a, *b)),
            KernelKind::ExplicitGram { points, .. } => Some((points[0], points[points.len() - 1])),
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(
            self.kind,
            KernelKind::OrnsteinUhlenbeck | KernelKind::PowerExponential { .. }
        )
    }

    /// Gaussian Markov families (OU and modulated Brownian motion).
    pub fn is_markov(&self) -> bool {
        match self.kind {
            KernelKind::OrnsteinUhlenbeck | KernelKind::ModulatedBrownian { .. } => true,
            KernelKind::PowerExponential { alpha } => alpha == 1.0,
            KernelKind::ExplicitGram { .. } => false,
        }
    }

    /// The point set of an explicit Gram kernel.
    pub fn natural_grid(&self) -> Option<Grid> {
        match &self.kind {
            KernelKind::ExplicitGram { points, .. } => Grid::from_points(points.clone()).ok(),
            _ => None,
        }
    }

    pub fn check_point(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite point {t}")));
        }
        match &self.kind {
            KernelKind::ExplicitGram { points, .. } => {
                if points.contains(&t) {
                    Ok(())
                } else {
                    Err(Error::OffGrid(t))
                }
            }
            _ => match self.domain() {
                Some((lo, hi)) => {
                    let slack = DOMAIN_SLACK * lo.abs().max(hi.abs()).max(1.0);
                    if t < lo - slack || t > hi + slack {
                        Err(Error::Domain { point: t, lo, hi })
                    } else {
                        Ok(())
                    }
                }
                None => Ok(()),
            },
        }
    }

    pub fn evaluate(&self, s: f64, t: f64) -> Result<f64> {
        self.check_point(s)?;
        self.check_point(t)?;
        Ok(self.eval_raw(s, t))
    }

    /// Evaluation without domain checks; arguments are canonicalized so the
    /// result is exactly symmetric.
    pub(crate) fn eval_raw(&self, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        match &self.kind {
            KernelKind::OrnsteinUhlenbeck => (lo - hi).exp(),
            KernelKind::PowerExponential { alpha } => (-(hi - lo).powf(*alpha)).exp(),
            KernelKind::ModulatedBrownian { g, .. } => lo / (g.g(lo) * g.g(hi)),
            KernelKind::ExplicitGram { matrix, points } => {
                let i = points.iter().position(|&p| p == lo).unwrap_or(0);
                let j = points.iter().position(|&p| p == hi).unwrap_or(0);
                matrix[(i, j)]
            }
        }
    }

    /// Covariance matrix of the process on `grid`, checked for PSD.
    pub fn gram(&self, grid: &Grid) -> Result<DMatrix<f64>> {
        let pts = grid.points();
        for &p in pts {
            self.check_point(p)?;
        }
        let n = pts.len();
        let mut out = DMatrix::zeros(n, n);
        match &self.kind {
            KernelKind::ExplicitGram { matrix, points } => {
                let idx: Vec<usize> = pts
                    .iter()
                    .map(|p| points.iter().position(|q| q == p).unwrap())
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] = matrix[(idx[i], idx[j])];
                    }
                }
            }
            KernelKind::ModulatedBrownian { g, .. } => {
                let gv: Vec<f64> = pts.iter().map(|&p| g.g(p)).collect();
                for i in 0..n {
                    for j in 0..=i {
                        let v = pts[j] / (gv[i] * gv[j]);
                        out[(i, j)] = v;
                        out[(j, i)] = v;
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..=i {
                        let v = self.eval_raw(pts[j], pts[i]);
                        out[(i, j)] = v;
                        out[(j, i)] = v;
                    }
                }
            }
        }
        linalg::check_psd(&out)?;
        Ok(out)
    }
}

/// JSON kernel description: `{"type": "ou" | "powerexp" | "modulated_bm" | "gram", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Ou,
    Powerexp {
        alpha: f64,
    },
    ModulatedBm {
        g: ScaleFunction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<[f64; 2]>,
    },
    Gram {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<f64>>,
    },
}

impl KernelSpec {
    /// Builds the kernel; `interval` supplies the modulated Brownian support
    /// when the spec omits it.
    pub fn build(&self, interval: Option<(f64, f64)>) -> Result<Kernel> {
        match self {
            Self::Ou => Ok(Kernel::ornstein_uhlenbeck()),
            Self::Powerexp { alpha } => Kernel::power_exponential(*alpha),
            Self::ModulatedBm { g, support } => {
                let (a, b) = support
                    .map(|[a, b]| (a, b))
                    .or(interval)
                    .ok_or_else(|| Error::Config("modulated_bm needs a support interval".into()))?;
                Kernel::modulated_brownian(g.clone(), a, b)
            }
            Self::Gram { matrix, points } => {
                let n = matrix.len();
                if matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::Config("gram matrix rows must all have length n".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                Kernel::explicit_gram(m, points.clone())
            }
        }
    }
}
