//! Ordered point sets on which Gram matrices and grid measures live.
//!
//! The dyadic grid of level `k` on `[a, b]` has `2^k + 1` points
//! `t_i = a + (b - a) i 2^{-k}`; the last point is pinned to `b` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dyadic level accepted anywhere in the crate (4097 points).
pub const MAX_LEVEL: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dyadic {
    pub a: f64,
    pub b: f64,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    dyadic: Option<Dyadic>,
}

impl Grid {
    pub fn dyadic(a: f64, b: f64, k: u32) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "dyadic grid needs a < b, got [{a}, {b}]"
            )));
        }
        if k > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "dyadic level {k} exceeds the cap {MAX_LEVEL}"
            )));
        }
        let cells = 1usize << k;
        let mut points: Vec<f64> = (0..=cells)
            .map(|i| a + (b - a) * (i as f64) / (cells as f64))
            .collect();
        points[cells] = b;
        Ok(Self {
            points,
            dyadic: Some(Dyadic { a, b, k }),
        })
    }

    /// Arbitrary strictly increasing finite point list.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("grid must be non-empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "grid points must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            points,
            dyadic: None,
        })
    }

    /// The index grid `0, 1, ..., n-1`, used for bare matrices.
    pub fn indices(n: usize) -> Self {
        Self {
            points: (0..n).map(|i| i as f64).collect(),
            dyadic: None,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor(&self) -> Option<Dyadic> {
        self.dyadic
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// Same points up to a relative tolerance of 1e-12.
    pub fn matches(&self, other: &Grid) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let scale = self
            .points
            .iter()
            .chain(other.points.iter())
            .fold(1.0f64, |m, p| m.max(p.abs()));
        self.points
            .iter()
            .zip(&other.points)
            .all(|(p, q)| (p - q).abs() <= 1e-12 * scale)
    }

    /// Index of the nearest grid point, leftmost on ties.
    pub fn nearest(&self, x: f64) -> usize {
        let pts = &self.points;
        let idx = pts.partition_point(|&p| p < x);
        if idx == 0 {
            return 0;
        }
        if idx == pts.len() {
            return pts.len() - 1;
        }
        let left = x - pts[idx - 1];
        let right = pts[idx] - x;
        if left <= right {
            idx - 1
        } else {
            idx
        }
    }

    /// Voronoi cell boundaries: `n + 1` values from the first to the last point.
    pub fn cell_edges(&self) -> Vec<f64> {
        let pts = &self.points;
        let mut edges = Vec::with_capacity(pts.len() + 1);
        edges.push(pts[0]);
        for w in pts.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(pts[pts.len() - 1]);
        edges
    }
}
