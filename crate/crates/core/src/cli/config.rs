//! JSON experiment configs.
//!
//! One schema serves every command: shared fields (kernel, interval, seed)
//! at the top level and one optional section per command. A command runs
//! with its section's defaults when the section is absent. `report` reads
//! `studies` (each a full config) after expanding `preset`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_sim::{SamplerConfig, DEFAULT_BATCH, DEFAULT_JITTER_MAX, DEFAULT_JITTER_START};
use crate::grid::Grid;
use crate::kernels::{Kernel, KernelSpec, ScaleFunction};
use crate::optimizer::DEFAULT_TOL;

/// Largest number of paths the optional dump writes.
pub const MAX_DUMP: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smallball: Option<SmallBallSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmin: Option<ArgminSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub studies: Vec<Config>,
    /// Run report studies concurrently.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub concurrent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default = "default_k_min")]
    pub k_min: u32,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    /// Stop refining once `σ²_{k-1} - σ²_k` falls below this.
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            k_min: default_k_min(),
            k_max: default_k_max(),
            stop_tol: 0.0,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSection {
    /// Also solve on the level-`k` grid and report the TV distance.
    #[serde(default)]
    pub cross_check: bool,
    #[serde(default = "default_k_max")]
    pub k: u32,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            cross_check: false,
            k: default_k_max(),
        }
    }
}

/// Grid level and sampler settings shared by the Monte Carlo sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_mc_k")]
    pub k: u32,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub stream: u64,
    #[serde(default = "default_jitter_start")]
    pub jitter_start: f64,
    #[serde(default = "default_jitter_max")]
    pub jitter_max: f64,
    /// Write the first `dump_paths` paths (at most 10^4) to `paths.csv`.
    #[serde(default)]
    pub dump_paths: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            k: default_mc_k(),
            n: default_n(),
            batch_size: DEFAULT_BATCH,
            stream: 0,
            jitter_start: DEFAULT_JITTER_START,
            jitter_max: DEFAULT_JITTER_MAX,
            dump_paths: 0,
            solver_tol: DEFAULT_TOL,
        }
    }
}

impl SimSettings {
    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            seed,
            n_paths: self.n,
            batch_size: self.batch_size,
            jitter_start: self.jitter_start,
            jitter_max: self.jitter_max,
            stream: self.stream,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Crude,
    Is,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    #[serde(flatten)]
    pub sim: SimSettings,
    #[serde(default = "default_tail_u")]
    pub u: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<TailMethod>,
}

impl Default for TailSection {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            u: default_tail_u(),
            methods: default_methods(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMode {
    Range,
    Zstar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallSection {
    #[serde(flatten)]
    pub sim: SimSettings,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_ball_mode")]
    pub mode: BallMode,
}

impl Default for SmallBallSection {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            eps: default_eps(),
            mode: BallMode::Range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    #[serde(flatten)]
    pub sim: SimSettings,
    #[serde(default = "default_diag_u")]
    pub u: Vec<f64>,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            u: default_diag_u(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgminSection {
    #[serde(flatten)]
    pub sim: SimSettings,
    #[serde(default = "default_argmin_u")]
    pub u: Vec<f64>,
    /// Levels for `m_x`, the argmin law given `Y <= x` and `min X > 0`.
    #[serde(default)]
    pub x: Vec<f64>,
    /// Also run plain rejection conditioning as an oracle.
    #[serde(default)]
    pub direct: bool,
}

impl Default for ArgminSection {
    fn default() -> Self {
        Self {
            sim: SimSettings::default(),
            u: default_argmin_u(),
            x: Vec::new(),
            direct: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// OU on [0,1], modulated Brownian motion with g = √t on [1,2], and the
    /// power-exponential kernel with α = 1/2 on [0,1].
    PaperReproduction,
}

fn default_k_min() -> u32 {
    2
}
fn default_k_max() -> u32 {
    8
}
fn default_mc_k() -> u32 {
    5
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_n() -> usize {
    100_000
}
fn default_batch() -> usize {
    DEFAULT_BATCH
}
fn default_jitter_start() -> f64 {
    DEFAULT_JITTER_START
}
fn default_jitter_max() -> f64 {
    DEFAULT_JITTER_MAX
}
fn default_tail_u() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0]
}
fn default_methods() -> Vec<TailMethod> {
    vec![TailMethod::Crude, TailMethod::Is]
}
fn default_eps() -> Vec<f64> {
    vec![0.5, 0.4, 0.3]
}
fn default_ball_mode() -> BallMode {
    BallMode::Range
}
fn default_diag_u() -> Vec<f64> {
    vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
}
fn default_argmin_u() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn interval(&self) -> Result<(f64, f64)> {
        match (self.interval, &self.kernel) {
            (Some([a, b]), _) => Ok((a, b)),
            (None, Some(KernelSpec::Gram { .. })) => Ok((0.0, 0.0)),
            _ => Err(Error::Config("missing \"interval\": [a, b]".into())),
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let spec = self
            .kernel
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"kernel\"".into()))?;
        let interval = match spec {
            KernelSpec::Gram { .. } => None,
            _ => Some(self.interval()?),
        };
        spec.build(interval)
    }

    /// Grid for the Monte Carlo commands: the kernel's own point set for
    /// explicit Gram matrices, otherwise the dyadic grid of level `k`.
    pub fn grid(&self, kernel: &Kernel, k: u32) -> Result<Grid> {
        match kernel.natural_grid() {
            Some(g) => Ok(g),
            None => {
                let (a, b) = self.interval()?;
                Grid::dyadic(a, b, k)
            }
        }
    }

    /// Fills the section a command reads so the resolved config written to
    /// output headers shows every value used.
    pub fn resolved(&self, section: Section) -> Self {
        let mut c = self.clone();
        match section {
            Section::Solve => {
                c.solve.get_or_insert_with(SolveSection::default);
            }
            Section::Analytic => {
                c.analytic.get_or_insert_with(AnalyticSection::default);
            }
            Section::Tail => {
                c.tail.get_or_insert_with(TailSection::default);
            }
            Section::SmallBall => {
                c.smallball.get_or_insert_with(SmallBallSection::default);
            }
            Section::Diagnose => {
                c.diagnose.get_or_insert_with(DiagnoseSection::default);
            }
            Section::Argmin => {
                c.argmin.get_or_insert_with(ArgminSection::default);
            }
        }
        c
    }

    /// Studies for `report`: the preset's studies followed by the listed
    /// ones; each inherits the report seed unless it sets its own.
    pub fn expand_studies(&self) -> Vec<Config> {
        let mut out = Vec::new();
        if let Some(Preset::PaperReproduction) = self.preset {
            out.extend(paper_reproduction());
        }
        out.extend(self.studies.iter().cloned());
        for (i, s) in out.iter_mut().enumerate() {
            if s.seed == 0 {
                s.seed = self.seed;
            }
            if s.name.is_none() {
                s.name = Some(format!("study{}", i + 1));
            }
        }
        out
    }

    /// Applies `--seed` to this config and every study.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        for s in &mut self.studies {
            s.override_seed(seed);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Solve,
    Analytic,
    Tail,
    SmallBall,
    Diagnose,
    Argmin,
}

fn paper_reproduction() -> Vec<Config> {
    let study = |name: &str, kernel: KernelSpec, interval: [f64; 2], analytic: bool| Config {
        name: Some(name.into()),
        kernel: Some(kernel),
        interval: Some(interval),
        solve: Some(SolveSection::default()),
        analytic: analytic.then_some(AnalyticSection {
            cross_check: true,
            k: 8,
        }),
        tail: Some(TailSection::default()),
        diagnose: Some(DiagnoseSection {
            sim: SimSettings {
                k: 6,
                ..SimSettings::default()
            },
            u: default_diag_u(),
        }),
        argmin: Some(ArgminSection::default()),
        ..Config::default()
    };
    vec![
        study("ou", KernelSpec::Ou, [0.0, 1.0], true),
        study(
            "modulated_bm",
            KernelSpec::ModulatedBm {
                g: ScaleFunction::Power(0.5),
                support: None,
            },
            [1.0, 2.0],
            true,
        ),
        study("powerexp", KernelSpec::Powerexp { alpha: 0.5 }, [0.0, 1.0], false),
    ]
}
