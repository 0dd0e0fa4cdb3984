//! Exact sampling of the Gaussian vector on a grid.
//!
//! Standard normals come from a ChaCha8 stream keyed by `(seed, stream)`.
//! Path `j` consumes the `dim` 64-bit words starting at word `j * dim`, so
//! any path range can be generated on its own and the output never depends
//! on batch size or thread count. Normals use the inverse CDF of the
//! uniform `((w >> 12) + 1/2) 2^{-52}`, which never rounds to 0 or 1.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::measure::GridMeasure;

pub const DEFAULT_BATCH: usize = 4096;
pub const DEFAULT_JITTER_START: f64 = 1e-12;
pub const DEFAULT_JITTER_MAX: f64 = 1e-6;

fn default_batch() -> usize {
    DEFAULT_BATCH
}
fn default_jitter_start() -> f64 {
    DEFAULT_JITTER_START
}
fn default_jitter_max() -> f64 {
    DEFAULT_JITTER_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_paths: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_jitter_start")]
    pub jitter_start: f64,
    #[serde(default = "default_jitter_max")]
    pub jitter_max: f64,
    #[serde(default)]
    pub stream: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64, n_paths: usize) -> Self {
        Self {
            seed,
            n_paths,
            batch_size: DEFAULT_BATCH,
            jitter_start: DEFAULT_JITTER_START,
            jitter_max: DEFAULT_JITTER_MAX,
            stream: 0,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.batch_size == 0 {
            return Err(Error::Config("n_paths and batch_size must be at least 1".into()));
        }
        if !(self.jitter_start > 0.0 && self.jitter_start <= self.jitter_max) {
            return Err(Error::Config(format!(
                "need 0 < jitter_start <= jitter_max, got {} and {}",
                self.jitter_start, self.jitter_max
            )));
        }
        Ok(())
    }
}

/// Lower-triangular `L` with `L L^T = Σ + λ I`.
#[derive(Debug, Clone)]
pub struct Factor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl Factor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }
}

/// Cholesky with the smallest ridge `λ ∈ {0, start, 10 start, ...} <= max`.
pub fn factorize(sigma: &DMatrix<f64>, jitter_start: f64, jitter_max: f64) -> Result<Factor> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return Err(Error::InvalidParameter("covariance must be square and non-empty".into()));
    }
    linalg::check_symmetric(sigma)?;
    let mut lambda = 0.0;
    loop {
        let shifted = sigma + DMatrix::identity(n, n) * lambda;
        if let Some(c) = shifted.cholesky() {
            return Ok(Factor {
                lower: c.l(),
                jitter: lambda,
            });
        }
        lambda = if lambda == 0.0 { jitter_start } else { lambda * 10.0 };
        if lambda > jitter_max * (1.0 + 1e-9) {
            return Err(Error::FactorizationFailed { jitter_max });
        }
    }
}

#[inline]
pub fn uniform_from_bits(w: u64) -> f64 {
    ((w >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

#[inline]
pub fn inverse_normal_cdf(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Positioned generator for the first normal of `first_path`.
fn stream_at(seed: u64, stream: u64, first_path: u64, dim: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(first_path) * dim as u128 * 2);
    rng
}

/// Paths stored path-major: path `i` occupies `values[i*dim .. (i+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    grid: Grid,
    values: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub first_path: u64,
}

impl PathBatch {
    /// Wraps externally produced rows, mainly for tests and tooling.
    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = grid.len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::GridMismatch(format!("row of length {} on {dim} points", r.len())));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            grid,
            values,
            seed: 0,
            stream: 0,
            first_path: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn n_paths(&self) -> usize {
        self.values.len() / self.dim()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim())
    }

    pub fn to_csv(&self, limit: usize) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.grid.points().iter().map(|p| format!("t={p}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for p in self.paths().take(limit) {
            let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Paths `first .. first + count` of the stream `(seed, stream)`.
pub fn sample_range(factor: &Factor, grid: &Grid, seed: u64, stream: u64, first: u64, count: usize) -> Result<PathBatch> {
    let dim = factor.dim();
    if grid.len() != dim {
        return Err(Error::GridMismatch(format!("{dim}-dimensional factor on {} points", grid.len())));
    }
    let mut rng = stream_at(seed, stream, first, dim);
    let xi = DMatrix::from_fn(dim, count, |_, _| inverse_normal_cdf(uniform_from_bits(rng.next_u64())));
    // column-major: column j is path j; `from_fn` fills column by column
    let x = &factor.lower * xi;
    Ok(PathBatch {
        grid: grid.clone(),
        values: x.as_slice().to_vec(),
        seed,
        stream,
        first_path: first,
    })
}

/// All `n_paths` paths in one batch.
pub fn sample(factor: &Factor, grid: &Grid, config: &SamplerConfig) -> Result<PathBatch> {
    config.validate()?;
    let mut values = Vec::with_capacity(config.n_paths * factor.dim());
    let mut first = 0usize;
    while first < config.n_paths {
        let count = config.batch_size.min(config.n_paths - first);
        let b = sample_range(factor, grid, config.seed, config.stream, first as u64, count)?;
        values.extend_from_slice(&b.values);
        first += count;
    }
    Ok(PathBatch {
        grid: grid.clone(),
        values,
        seed: config.seed,
        stream: config.stream,
        first_path: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFunctionals {
    /// `Y = Σ w_i X_i`.
    pub y: f64,
    pub min: f64,
    /// Leftmost index attaining the minimum.
    pub argmin: usize,
}

#[inline]
pub fn path_functionals(x: &[f64], weights: &[f64]) -> PathFunctionals {
    let mut y = 0.0;
    let mut min = f64::INFINITY;
    let mut argmin = 0;
    for (i, (&v, &w)) in x.iter().zip(weights).enumerate() {
        y += w * v;
        if v < min {
            min = v;
            argmin = i;
        }
    }
    PathFunctionals { y, min, argmin }
}

pub fn functionals(batch: &PathBatch, weights: &GridMeasure) -> Result<Vec<PathFunctionals>> {
    if !batch.grid().matches(weights.grid()) {
        return Err(Error::GridMismatch("weights are not on the batch grid".into()));
    }
    Ok(batch.paths().map(|p| path_functionals(p, weights.weights())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::optimizer::{solve_on_grid, DEFAULT_TOL};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn factorize_examples() {
        let f = factorize(&DMatrix::identity(3, 3), 1e-12, 1e-6).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.lower(), &DMatrix::identity(3, 3));

        let ones = DMatrix::from_element(2, 2, 1.0);
        let f = factorize(&ones, 1e-12, 1e-6).unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= 1e-6);
        let back = f.lower() * f.lower().transpose();
        assert!((back - &ones).amax() <= 1e-6);

        let g = Grid::dyadic(0.0, 1.0, 8).unwrap();
        let sigma = Kernel::ornstein_uhlenbeck().gram(&g).unwrap();
        assert_eq!(factorize(&sigma, 1e-12, 1e-6).unwrap().jitter(), 0.0);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(factorize(&bad, 1e-12, 1e-6), Err(Error::FactorizationFailed { .. })));
    }

    #[test]
    fn uniform_mapping_is_open_interval() {
        assert!(uniform_from_bits(0) > 0.0);
        assert!(uniform_from_bits(u64::MAX) < 1.0);
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn functionals_examples() {
        let g = Grid::indices(3);
        let w = GridMeasure::new(g.clone(), vec![1.0 / 3.0; 3]).unwrap();
        let b = PathBatch::from_rows(g, &[vec![3.0, 1.0, 2.0], vec![1.0, 1.0, 5.0], vec![0.7; 3]]).unwrap();
        let f = functionals(&b, &w).unwrap();
        assert!((f[0].y - 2.0).abs() < 1e-15);
        assert_eq!((f[0].min, f[0].argmin), (1.0, 1));
        assert_eq!(f[1].argmin, 0);
        assert!((f[2].y - 0.7).abs() < 1e-15);
        assert_eq!((f[2].min, f[2].argmin), (0.7, 0));
        let other = GridMeasure::dirac(Grid::indices(2), 0).unwrap();
        assert!(functionals(&b, &other).is_err());
    }

    #[test]
    fn batch_size_does_not_change_paths() {
        let g = Grid::dyadic(0.0, 1.0, 3).unwrap();
        let f = factorize(&Kernel::ornstein_uhlenbeck().gram(&g).unwrap(), 1e-12, 1e-6).unwrap();
        let mut c = SamplerConfig::new(11, 1000);
        c.batch_size = 7;
        let a = sample(&f, &g, &c).unwrap();
        c.batch_size = 1000;
        let b = sample(&f, &g, &c).unwrap();
        assert_eq!(a, b);
        let tail = sample_range(&f, &g, 11, 0, 990, 10).unwrap();
        assert_eq!(tail.path(3), a.path(993));
        let other = sample(&f, &g, &c.with_stream(1)).unwrap();
        assert_ne!(a.path(0), other.path(0));
    }

    #[test]
    fn moments_and_marginals() {
        let g = Grid::dyadic(0.0, 1.0, 4).unwrap();
        let sigma = Kernel::ornstein_uhlenbeck().gram(&g).unwrap();
        let f = factorize(&sigma, 1e-12, 1e-6).unwrap();
        let n = 100_000;
        let b = sample(&f, &g, &SamplerConfig::new(5, n)).unwrap();
        let d = g.len();
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::zeros(d, d);
        for p in b.paths() {
            for i in 0..d {
                mean[i] += p[i];
                for j in 0..d {
                    cov[(i, j)] += p[i] * p[j];
                }
            }
        }
        let nf = n as f64;
        for m in &mean {
            assert!((m / nf).abs() < 4.0 / nf.sqrt());
        }
        cov /= nf;
        assert!((cov - &sigma).amax() <= 0.02);

        let normal = Normal::standard();
        let crit = 1.9495 / nf.sqrt();
        for &i in &[0usize, 7, 16] {
            let mut v: Vec<f64> = b.paths().map(|p| p[i] / sigma[(i, i)].sqrt()).collect();
            v.sort_by(f64::total_cmp);
            let mut ks = 0.0f64;
            for (j, &x) in v.iter().enumerate() {
                let c = normal.cdf(x);
                ks = ks.max((c - j as f64 / nf).abs()).max(((j + 1) as f64 / nf - c).abs());
            }
            assert!(ks < crit, "coordinate {i}: KS {ks} vs {crit}");
        }
    }

    #[test]
    fn zstar_nonpositive() {
        let g = Grid::dyadic(0.0, 1.0, 5).unwrap();
        let k = Kernel::ornstein_uhlenbeck();
        let sol = solve_on_grid(&k, &g, DEFAULT_TOL).unwrap();
        let f = factorize(&k.gram(&g).unwrap(), 1e-12, 1e-6).unwrap();
        let b = sample(&f, &g, &SamplerConfig::new(3, 20_000)).unwrap();
        for p in b.paths() {
            let y = path_functionals(p, sol.weights()).y;
            let z = p.iter().fold(f64::INFINITY, |m, &x| m.min(x - y));
            assert!(z <= 1e-12);
        }
    }
}
