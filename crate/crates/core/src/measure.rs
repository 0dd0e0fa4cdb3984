//! Finite measures on an interval: atoms plus an absolutely continuous part,
//! and probability weights on a grid.
//!
//! Integrals against a kernel use exact atom terms and a composite midpoint
//! rule for the density. Density masses over sub-intervals use closed forms
//! where available and Gauss-Legendre otherwise.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{Kernel, ScaleFunction};

/// Default number of midpoint panels for density integrals.
pub const DEFAULT_PANELS: usize = 1 << 12;
/// Mesh used by [`density_floor`].
pub const FLOOR_MESH: usize = 4096;
const NONNEG_MESH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityShape {
    /// `coef * x^exponent`.
    Power { coef: f64, exponent: f64 },
    Uniform { level: f64 },
    /// `-g(x) g''(x)`.
    NegGg2 { g: ScaleFunction },
    /// Piecewise linear through `(x, values)`.
    Tabulated { x: Vec<f64>, values: Vec<f64> },
}

impl DensityShape {
    fn value(&self, x: f64) -> f64 {
        match self {
            Self::Power { coef, exponent } => coef * x.powf(*exponent),
            Self::Uniform { level } => *level,
            Self::NegGg2 { g } => -g.g(x) * g.d2g(x),
            Self::Tabulated { x: xs, values } => {
                let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1) - 1;
                let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] + s * (values[i + 1] - values[i])
            }
        }
    }

    fn integral(&self, x0: f64, x1: f64) -> f64 {
        if x1 <= x0 {
            return 0.0;
        }
        match self {
            Self::Power { coef, exponent } => {
                let e1 = exponent + 1.0;
                if e1.abs() < 1e-14 {
                    coef * (x1 / x0).ln()
                } else {
                    coef * (x1.powf(e1) - x0.powf(e1)) / e1
                }
            }
            Self::Uniform { level } => level * (x1 - x0),
            Self::NegGg2 { .. } => gauss_legendre(|x| self.value(x), x0, x1, 64),
            Self::Tabulated { x: xs, .. } => {
                let mut knots = vec![x0];
                knots.extend(xs.iter().copied().filter(|&p| p > x0 && p < x1));
                knots.push(x1);
                knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
                    .sum()
            }
        }
    }
}

/// Composite 5-point Gauss-Legendre rule.
fn gauss_legendre<F: Fn(f64) -> f64>(f: F, x0: f64, x1: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (x1 - x0) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = x0 + (p as f64 + 0.5) * h;
            NODES
                .iter()
                .zip(WEIGHTS.iter())
                .map(|(n, w)| w * f(mid + 0.5 * h * n))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// Absolutely continuous part: `scale * shape(x)` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub lo: f64,
    pub hi: f64,
    pub shape: DensityShape,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Density {
    pub fn new(lo: f64, hi: f64, shape: DensityShape) -> Self {
        Self {
            lo,
            hi,
            shape,
            scale: 1.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            self.scale * self.shape.value(x)
        }
    }

    pub fn mass_between(&self, x0: f64, x1: f64) -> f64 {
        let (l, r) = (x0.max(self.lo), x1.min(self.hi));
        if r <= l {
            0.0
        } else {
            self.scale * self.shape.integral(l, r)
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass_between(self.lo, self.hi)
    }

    /// Midpoint-rule nodes `(x_i, f(x_i) h)`.
    fn midpoint_nodes(&self, panels: usize) -> Vec<(f64, f64)> {
        let h = (self.hi - self.lo) / panels as f64;
        (0..panels)
            .map(|i| {
                let x = self.lo + (i as f64 + 0.5) * h;
                (x, self.value(x) * h)
            })
            .collect()
    }
}

/// Finite measure on `[a, b]`: point masses plus an optional density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixedMeasureSpec")]
pub struct MixedMeasure {
    interval: [f64; 2],
    atoms: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<Density>,
    total_mass: f64,
}

#[derive(Deserialize)]
struct MixedMeasureSpec {
    interval: [f64; 2],
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default)]
    density: Option<Density>,
}

impl TryFrom<MixedMeasureSpec> for MixedMeasure {
    type Error = Error;
    fn try_from(s: MixedMeasureSpec) -> Result<Self> {
        MixedMeasure::new(s.interval[0], s.interval[1], s.atoms, s.density)
    }
}

impl MixedMeasure {
    /// Validates and caches the total mass. Zero-mass atoms are dropped.
    pub fn new(a: f64, b: f64, atoms: Vec<(f64, f64)>, density: Option<Density>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
        }
        let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
        for &(loc, mass) in &atoms {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(Error::InvalidParameter(format!("atom mass {mass} at {loc} is negative")));
            }
            if loc < a - slack || loc > b + slack {
                return Err(Error::InvalidParameter(format!("atom at {loc} outside [{a}, {b}]")));
            }
        }
        let atoms: Vec<(f64, f64)> = atoms.into_iter().filter(|&(_, m)| m > 0.0).collect();
        if let Some(d) = &density {
            if !(d.lo < d.hi) || d.lo < a - slack || d.hi > b + slack {
                return Err(Error::InvalidParameter(format!(
                    "density interval [{}, {}] not inside [{a}, {b}]",
                    d.lo, d.hi
                )));
            }
            let h = (d.hi - d.lo) / NONNEG_MESH as f64;
            for i in 0..NONNEG_MESH {
                let x = d.lo + (i as f64 + 0.5) * h;
                let v = d.value(x);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("density is {v} at {x}")));
                }
            }
        }
        let total_mass = atoms.iter().map(|&(_, m)| m).sum::<f64>()
            + density.as_ref().map_or(0.0, Density::mass);
        Ok(Self {
            interval: [a, b],
            atoms,
            density,
            total_mass,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.interval[0], self.interval[1])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn density_mass(&self) -> f64 {
        self.density.as_ref().map_or(0.0, Density::mass)
    }

    /// Leftmost point carrying mass.
    pub fn support_start(&self) -> f64 {
        let atom_min = self.atoms.iter().map(|&(l, _)| l).fold(f64::INFINITY, f64::min);
        let dens_min = self.density.as_ref().map_or(f64::INFINITY, |d| d.lo);
        atom_min.min(dens_min)
    }

    /// Quadrature nodes `(location, mass)`: atoms exactly, density by
    /// `panels` midpoint cells.
    pub fn nodes(&self, panels: usize) -> Vec<(f64, f64)> {
        let mut out = self.atoms.clone();
        if let Some(d) = &self.density {
            out.extend(d.midpoint_nodes(panels.max(1)));
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for atom in &mut out.atoms {
            atom.1 *= factor;
        }
        if let Some(d) = &mut out.density {
            d.scale *= factor;
        }
        out.total_mass *= factor;
        out
    }
}

/// Probability weights on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} weights for {} grid points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("grid weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("grid weights sum to {total}, not 1")));
        }
        Ok(Self { grid, weights })
    }

    /// Divides by the total; fails on zero total.
    pub fn from_unnormalized(grid: Grid, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMass);
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(grid, weights)
    }

    pub fn dirac(grid: Grid, index: usize) -> Result<Self> {
        let mut w = vec![0.0; grid.len()];
        *w.get_mut(index)
            .ok_or_else(|| Error::InvalidParameter(format!("index {index} outside grid")))? = 1.0;
        Self::new(grid, w)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_grid(self, grid: Grid) -> Result<Self> {
        Self::new(grid, self.weights)
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.grid
            .points()
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect()
    }

    /// `point,weight` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("point,weight\n");
        for (p, w) in self.grid.points().iter().zip(&self.weights) {
            let _ = writeln!(s, "{p},{w}");
        }
        s
    }
}

/// Either kind of measure, for the integral operations.
#[derive(Debug, Clone, Copy)]
pub enum MeasureRef<'a> {
    Mixed(&'a MixedMeasure),
    Grid(&'a GridMeasure),
}

impl<'a> From<&'a MixedMeasure> for MeasureRef<'a> {
    fn from(m: &'a MixedMeasure) -> Self {
        Self::Mixed(m)
    }
}

impl<'a> From<&'a GridMeasure> for MeasureRef<'a> {
    fn from(m: &'a GridMeasure) -> Self {
        Self::Grid(m)
    }
}

impl MeasureRef<'_> {
    fn nodes(&self, panels: usize) -> Vec<(f64, f64)> {
        match self {
            Self::Mixed(m) => m.nodes(panels),
            Self::Grid(g) => g.nodes(),
        }
    }
}

pub fn normalize(m: &MixedMeasure) -> Result<MixedMeasure> {
    if !(m.total_mass() > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut out = m.scaled(1.0 / m.total_mass());
    out.total_mass = 1.0;
    Ok(out)
}

fn check_nodes(kernel: &Kernel, nodes: &[(f64, f64)]) -> Result<()> {
    nodes.iter().try_for_each(|&(x, _)| kernel.check_point(x))
}

fn row_sums(kernel: &Kernel, eval: &[f64], nodes: &[(f64, f64)]) -> Vec<f64> {
    let work = eval.len() * nodes.len();
    let row = |&t: &f64| nodes.iter().map(|&(x, w)| w * kernel.eval_raw(t, x)).sum::<f64>();
    if work > 1 << 16 {
        eval.par_iter().map(row).collect()
    } else {
        eval.iter().map(row).collect()
    }
}

/// `m(t) = ∫ R(t, s) m(ds)` at each evaluation point.
pub fn mean_function<'a>(
    kernel: &Kernel,
    m: impl Into<MeasureRef<'a>>,
    eval_points: &[f64],
    quadrature_points: usize,
) -> Result<Vec<f64>> {
    let nodes = m.into().nodes(quadrature_points);
    check_nodes(kernel, &nodes)?;
    for &t in eval_points {
        kernel.check_point(t)?;
    }
    Ok(row_sums(kernel, eval_points, &nodes))
}

/// Double integral `∬ R(s, t) m(ds) m(dt)`.
pub fn energy<'a>(kernel: &Kernel, m: impl Into<MeasureRef<'a>>, quadrature_points: usize) -> Result<f64> {
    let nodes = m.into().nodes(quadrature_points);
    check_nodes(kernel, &nodes)?;
    let locs: Vec<f64> = nodes.iter().map(|&(x, _)| x).collect();
    let mf = row_sums(kernel, &locs, &nodes);
    Ok(nodes.iter().zip(&mf).map(|(&(_, w), v)| w * v).sum())
}

/// Moves atoms to their nearest grid point (leftmost on ties) and assigns
/// each grid point the density mass of its Voronoi cell.
pub fn discretize(m: &MixedMeasure, grid: &Grid) -> Result<GridMeasure> {
    let mut w = vec![0.0; grid.len()];
    for &(loc, mass) in m.atoms() {
        w[grid.nearest(loc)] += mass;
    }
    if let Some(d) = m.density() {
        let mut edges = grid.cell_edges();
        edges[0] = f64::NEG_INFINITY;
        let last = edges.len() - 1;
        edges[last] = f64::INFINITY;
        for (i, cell) in edges.windows(2).enumerate() {
            w[i] += d.mass_between(cell[0], cell[1]);
        }
    }
    GridMeasure::from_unnormalized(grid.clone(), w)
}

pub fn tv_distance(p: &GridMeasure, q: &GridMeasure) -> Result<f64> {
    if !p.grid().matches(q.grid()) {
        return Err(Error::GridMismatch("total variation needs a common grid".into()));
    }
    let s: f64 = p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// `W1 = ∫ |F_p - F_q| dt` over the merged support.
pub fn wasserstein1(p: &GridMeasure, q: &GridMeasure) -> Result<f64> {
    let (pa, pb) = p.grid().interval();
    let (qa, qb) = q.grid().interval();
    let scale = pa.abs().max(pb.abs()).max(1.0);
    if (pa - qa).abs() > 1e-12 * scale || (pb - qb).abs() > 1e-12 * scale {
        return Err(Error::GridMismatch(format!(
            "intervals [{pa}, {pb}] and [{qa}, {qb}] differ"
        )));
    }
    let mut events: Vec<(f64, f64)> = p
        .nodes()
        .into_iter()
        .chain(q.nodes().into_iter().map(|(x, w)| (x, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// Infimum of the density over the whole interval on a midpoint mesh; 0
/// when there is no density or it does not cover the interval.
pub fn density_floor(m: &MixedMeasure) -> f64 {
    let (a, b) = m.interval();
    let Some(d) = m.density() else {
        return 0.0;
    };
    let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
    if d.lo > a + slack || d.hi < b - slack {
        return 0.0;
    }
    let h = (b - a) / FLOOR_MESH as f64;
    (0..FLOOR_MESH)
        .map(|i| d.value(a + (i as f64 + 0.5) * h))
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}
