//! One function per subcommand. Each writes its files through a [`Sink`]
//! and returns the tables the report embeds plus any statistical failures
//! (which do not stop the remaining outputs from being written).

use std::path::PathBuf;

use serde::Serialize;

use super::config::{BallMode, Config, Section, SimSettings, TailMethod, MAX_DUMP};
use super::output::{num, opt, short, Sink, Table};
use super::svg::LogLogPlot;
use crate::closedform;
use crate::error::{Error, Result};
use crate::estimators::{self, ArgminHistogram, Estimate, Simulation, SmallBallMode, CERT_TOL, ESS_THRESHOLD};
use crate::gauss_sim;
use crate::grid::Grid;
use crate::kernels::Kernel;
use crate::measure::{self, GridMeasure};
use crate::optimizer::{self, OptimalSolution, SolveMethod};

#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    /// Statistical or numerical failures; outputs were still written.
    pub failures: Vec<String>,
    /// Informational remarks (flagged points, capped dumps).
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    fn finish(mut self, sink: &Sink) -> Self {
        self.files = sink.written().to_vec();
        self
    }
}

fn method_name(m: SolveMethod) -> &'static str {
    match m {
        SolveMethod::Theta => "theta",
        SolveMethod::ActiveSet => "active_set",
        SolveMethod::FrankWolfe => "frank_wolfe",
    }
}

fn level_label(k: Option<u32>) -> String {
    k.map(|k| k.to_string()).unwrap_or_default()
}

pub fn solve(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::Solve);
    let s = cfg.solve.clone().expect("resolved");
    let kernel = cfg.kernel()?;
    let interval = cfg.interval()?;
    let trace = optimizer::refine_with_tol(&kernel, interval, s.k_min, s.k_max, s.stop_tol, s.tol)?;
    let mut out = Outcome::default();

    let mut table = Table::new(&[
        "k",
        "points",
        "sigma_star_sq",
        "method",
        "gap",
        "iterations",
        "support",
        "certificate",
    ]);
    let mut reports = Vec::new();
    for level in &trace.levels {
        let sol = &level.solution;
        let rep = sol.report(CERT_TOL);
        if !rep.passed {
            out.failures.push(format!(
                "certificate failed at k={}: min slack {:.3e}, support violation {:.3e}",
                level_label(level.k),
                rep.min_slack,
                rep.max_support_violation
            ));
        }
        table.push(vec![
            level_label(level.k),
            sol.weights().len().to_string(),
            num(level.sigma_star_sq),
            method_name(sol.method).into(),
            num(sol.gap),
            sol.iterations.to_string(),
            sol.support.len().to_string(),
            if rep.passed { "pass" } else { "fail" }.into(),
        ]);
        reports.push(rep);
    }
    let monotone = trace.is_monotone(1e-10);
    if !monotone {
        out.failures.push("refinement sigma_star_sq increased between levels".into());
    }
    sink.csv("trace.csv", &table)?;

    let last = trace.last();
    let mut weights = Table::new(&["point", "weight", "mean"]);
    for ((p, w), m) in last
        .solution
        .measure
        .grid()
        .points()
        .iter()
        .zip(last.solution.weights())
        .zip(&last.solution.certificate)
    {
        weights.push(vec![num(*p), num(*w), num(*m)]);
    }
    sink.csv("weights.csv", &weights)?;

    #[derive(Serialize)]
    struct LevelInfo {
        k: Option<u32>,
        sigma_star_sq: f64,
        wall_time: f64,
        certificate_passed: bool,
    }
    #[derive(Serialize)]
    struct SolveJson<'a> {
        converged: bool,
        final_gap: f64,
        monotone: bool,
        levels: Vec<LevelInfo>,
        solution: &'a OptimalSolution,
        certificate: &'a optimizer::CertificateReport,
    }
    sink.json(
        "solution.json",
        &SolveJson {
            converged: trace.converged,
            final_gap: trace.final_gap,
            monotone,
            levels: trace
                .levels
                .iter()
                .zip(&reports)
                .map(|(l, r)| LevelInfo {
                    k: l.k,
                    sigma_star_sq: l.sigma_star_sq,
                    wall_time: l.wall_time,
                    certificate_passed: r.passed,
                })
                .collect(),
            solution: &last.solution,
            certificate: reports.last().expect("nonempty"),
        },
    )?;
    let mut brief = table;
    brief.columns.truncate(4);
    for r in &mut brief.rows {
        r.truncate(4);
        r[2] = short(r[2].parse().unwrap_or(f64::NAN));
    }
    out.tables.push(("Refinement trace".into(), brief));
    Ok(out.finish(sink))
}

pub fn analytic(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::Analytic);
    let s = cfg.analytic.clone().expect("resolved");
    let kernel = cfg.kernel()?;
    let (a, b) = cfg.interval()?;
    let sol = closedform::analytic(&kernel, (a, b))?;
    let mut out = Outcome::default();

    #[derive(Serialize)]
    struct Cross {
        k: u32,
        sigma_star_sq_k: f64,
        tv: f64,
        wasserstein1: f64,
    }
    let mut cross = None;
    if s.cross_check {
        let grid = Grid::dyadic(a, b, s.k)?;
        let numeric = optimizer::solve_on_grid(&kernel, &grid, optimizer::DEFAULT_TOL)?;
        let disc = measure::discretize(&sol.measure, &grid)?;
        let tv = measure::tv_distance(&disc, &numeric.measure)?;
        let w1 = measure::wasserstein1(&disc, &numeric.measure)?;
        let mut t = Table::new(&["point", "analytic", "solver"]);
        for ((p, x), y) in grid.points().iter().zip(disc.weights()).zip(numeric.weights()) {
            t.push(vec![num(*p), num(*x), num(*y)]);
        }
        sink.csv("analytic_grid.csv", &t)?;
        cross = Some(Cross {
            k: s.k,
            sigma_star_sq_k: numeric.sigma_star_sq,
            tv,
            wasserstein1: w1,
        });
    }

    #[derive(Serialize)]
    struct AnalyticJson<'a> {
        #[serde(flatten)]
        solution: &'a closedform::AnalyticSolution,
        cross_check: Option<Cross>,
    }
    let case = sol.case.map(|c| format!("{c:?}")).unwrap_or_default();
    let mut t = Table::new(&["case", "a0", "total_mass", "sigma_star_sq", "k", "sigma_star_sq_k", "tv"]);
    t.push(vec![
        case,
        sol.a0.map(short).unwrap_or_default(),
        short(sol.total_mass),
        short(sol.sigma_star_sq),
        cross.as_ref().map(|c| c.k.to_string()).unwrap_or_default(),
        cross.as_ref().map(|c| short(c.sigma_star_sq_k)).unwrap_or_default(),
        cross.as_ref().map(|c| short(c.tv)).unwrap_or_default(),
    ]);
    sink.json(
        "analytic.json",
        &AnalyticJson {
            solution: &sol,
            cross_check: cross,
        },
    )?;
    out.tables.push(("Closed form".into(), t));
    Ok(out.finish(sink))
}

/// Kernel, grid, certified grid solution and sampler for a Monte Carlo section.
struct McSetup {
    kernel: Kernel,
    grid: Grid,
    solution: OptimalSolution,
}

fn mc_setup(cfg: &Config, sim: &SimSettings) -> Result<McSetup> {
    let kernel = cfg.kernel()?;
    let grid = cfg.grid(&kernel, sim.k)?;
    let solution = optimizer::solve_on_grid(&kernel, &grid, sim.solver_tol)?;
    Ok(McSetup { kernel, grid, solution })
}

fn dump_paths(cfg: &Config, sim: &SimSettings, setup: &McSetup, sink: &mut Sink, out: &mut Outcome) -> Result<()> {
    if sim.dump_paths == 0 {
        return Ok(());
    }
    let count = sim.dump_paths.min(MAX_DUMP).min(sim.n);
    if count < sim.dump_paths {
        out.notes.push(format!("path dump capped at {count} paths"));
    }
    let sigma = setup.kernel.gram(&setup.grid)?;
    let factor = gauss_sim::factorize(&sigma, sim.jitter_start, sim.jitter_max)?;
    let batch = gauss_sim::sample_range(&factor, &setup.grid, cfg.seed, sim.stream, 0, count)?;
    sink.csv_raw("paths.csv", &batch.to_csv(count))?;
    Ok(())
}

fn d_of(e: &Estimate, sigma_sq: f64) -> f64 {
    let u = e.meta.param;
    e.log_value + u * u / (2.0 * sigma_sq)
}

pub fn tail(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::Tail);
    let s = cfg.tail.clone().expect("resolved");
    if s.methods.is_empty() || s.u.is_empty() {
        return Err(Error::Config("tail needs at least one method and one u".into()));
    }
    let setup = mc_setup(&cfg, &s.sim)?;
    let sampler = s.sim.sampler(cfg.seed);
    let sim = Simulation::new(&setup.kernel, &setup.grid, &sampler)?;
    let s2 = setup.solution.sigma_star_sq;
    let mut out = Outcome::default();

    let crude = if s.methods.contains(&TailMethod::Crude) {
        Some(estimators::tail_crude_sweep_with(&sim, &s.u, &sampler)?)
    } else {
        None
    };
    let is = if s.methods.contains(&TailMethod::Is) {
        let c = sampler.with_stream(sampler.stream + 1);
        Some(estimators::tail_is_sweep_with(&sim, &setup.kernel, &setup.solution, &s.u, &c)?)
    } else {
        None
    };
    let agreement: Option<Vec<f64>> = match (&crude, &is) {
        (Some(c), Some(i)) => Some(
            c.iter()
                .zip(i)
                .map(|(c, i)| {
                    let se = (c.stderr.powi(2) + i.stderr.powi(2)).sqrt();
                    (c.value - i.value).abs() / se
                })
                .collect(),
        ),
        _ => None,
    };

    let mut cols = vec!["u", "p_hat", "stderr", "log_p", "D_u", "hits", "n"];
    if agreement.is_some() {
        cols.push("agreement");
    }
    let render = |ests: &[Estimate]| {
        let mut t = Table::new(&cols);
        for (i, e) in ests.iter().enumerate() {
            let mut row = vec![
                num(e.meta.param),
                num(e.value),
                num(e.stderr),
                num(e.log_value),
                num(d_of(e, s2)),
                e.hits.to_string(),
                e.n.to_string(),
            ];
            if let Some(a) = &agreement {
                row.push(num(a[i]));
            }
            t.push(row);
        }
        t
    };
    if let Some(c) = &crude {
        sink.csv("tail_crude.csv", &render(c))?;
        for e in c.iter().filter(|e| e.hits == 0) {
            out.failures
                .push(format!("crude estimate at u={} recorded zero hits", e.meta.param));
        }
    }
    if let Some(i) = &is {
        sink.csv("tail_is.csv", &render(i))?;
    }

    #[derive(Serialize)]
    struct TailJson<'a> {
        sigma_star_sq: f64,
        points: usize,
        jitter: f64,
        crude: &'a Option<Vec<Estimate>>,
        is: &'a Option<Vec<Estimate>>,
        agreement: &'a Option<Vec<f64>>,
    }
    sink.json(
        "tail.json",
        &TailJson {
            sigma_star_sq: s2,
            points: setup.grid.len(),
            jitter: sim.jitter(),
            crude: &crude,
            is: &is,
            agreement: &agreement,
        },
    )?;
    dump_paths(&cfg, &s.sim, &setup, sink, &mut out)?;

    let mut t = Table::new(&["u", "crude p_hat", "crude stderr", "is p_hat", "is stderr", "agreement"]);
    for (j, &u) in s.u.iter().enumerate() {
        let pick = |v: &Option<Vec<Estimate>>, f: fn(&Estimate) -> f64| {
            v.as_ref().map(|v| short(f(&v[j]))).unwrap_or_default()
        };
        t.push(vec![
            num(u),
            pick(&crude, |e| e.value),
            pick(&crude, |e| e.stderr),
            pick(&is, |e| e.value),
            pick(&is, |e| e.stderr),
            agreement.as_ref().map(|a| short(a[j])).unwrap_or_default(),
        ]);
    }
    out.tables.push((format!("Tail sweep (k={}, n={})", s.sim.k, s.sim.n), t));
    Ok(out.finish(sink))
}

pub fn smallball(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::SmallBall);
    let s = cfg.smallball.clone().expect("resolved");
    let setup = mc_setup(&cfg, &s.sim)?;
    let sampler = s.sim.sampler(cfg.seed);
    let mode = match s.mode {
        BallMode::Range => SmallBallMode::Range,
        BallMode::Zstar => SmallBallMode::Zstar(&setup.solution),
    };
    let ests = estimators::small_ball_sweep(&setup.kernel, &setup.grid, &s.eps, &sampler, mode)?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["eps", "p_hat", "stderr", "log_p", "hits", "n"]);
    for e in &ests {
        t.push(vec![
            num(e.meta.param),
            num(e.value),
            num(e.stderr),
            num(e.log_value),
            e.hits.to_string(),
            e.n.to_string(),
        ]);
    }
    sink.csv("smallball.csv", &t)?;
    sink.json("smallball.json", &ests)?;
    dump_paths(&cfg, &s.sim, &setup, sink, &mut out)?;
    out.tables.push(("Small-ball probabilities".into(), t));
    Ok(out.finish(sink))
}

pub fn diagnose(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::Diagnose);
    let s = cfg.diagnose.clone().expect("resolved");
    let setup = mc_setup(&cfg, &s.sim)?;
    let sampler = s.sim.sampler(cfg.seed);
    let diag = estimators::correction_diagnostic(&setup.kernel, &setup.grid, &setup.solution, &s.u, &sampler)?;
    let mut out = Outcome::default();

    let mut t = Table::new(&["u", "log_p", "D_u", "rel_stderr", "hits", "used"]);
    for p in &diag.points {
        t.push(vec![
            num(p.u),
            num(p.log_p),
            num(p.d),
            num(p.rel_stderr),
            p.hits.to_string(),
            p.used.to_string(),
        ]);
    }
    sink.csv("diagnose.csv", &t)?;
    sink.json("diagnose.json", &diag)?;
    let plot = LogLogPlot {
        title: "correction term -D(u) against u",
        x_label: "u",
        y_label: "-D(u)",
        points: diag.points.iter().filter(|p| p.used).map(|p| (p.u, -p.d)).collect(),
        fit: diag.fit.as_ref().map(|f| (f.exponent, f.intercept)),
    };
    sink.svg("diagnose.svg", &plot.render())?;

    if !diag.flagged.is_empty() {
        out.notes.push(format!("u values excluded from the fit: {:?}", diag.flagged));
    }
    if diag.fit.is_none() {
        out.failures.push("fewer than two usable D(u) values; no exponent fitted".into());
    }
    let mut st = Table::new(&["sigma_star_sq", "exponent", "half_width", "intercept", "reference"]);
    st.push(vec![
        short(diag.sigma_star_sq),
        diag.fit.as_ref().map(|f| short(f.exponent)).unwrap_or_default(),
        diag.fit.as_ref().and_then(|f| f.half_width).map(short).unwrap_or_default(),
        diag.fit.as_ref().map(|f| short(f.intercept)).unwrap_or_default(),
        diag.reference_exponent.map(short).unwrap_or_default(),
    ]);
    let mut pt = t;
    for r in &mut pt.rows {
        for c in &mut r[1..4] {
            *c = short(c.parse().unwrap_or(f64::NAN));
        }
    }
    out.tables.push((format!("Correction term (k={}, n={})", s.sim.k, s.sim.n), pt));
    out.tables.push(("Fitted exponent".into(), st));
    Ok(out.finish(sink))
}

struct HistRow {
    param: f64,
    hist: Option<ArgminHistogram>,
    tv: Option<f64>,
    w1: Option<f64>,
}

fn hist_rows(
    target: &GridMeasure,
    params: &[f64],
    results: Vec<Result<ArgminHistogram>>,
    label: &str,
    out: &mut Outcome,
) -> Result<Vec<HistRow>> {
    let mut rows = Vec::new();
    for (&param, r) in params.iter().zip(results) {
        let row = match r {
            Ok(h) => {
                if !h.ess_ok() {
                    out.failures.push(format!(
                        "{label}={param}: effective sample size {:.1} below {ESS_THRESHOLD}",
                        h.ess
                    ));
                }
                HistRow {
                    param,
                    tv: Some(measure::tv_distance(&h.measure, target)?),
                    w1: Some(measure::wasserstein1(&h.measure, target)?),
                    hist: Some(h),
                }
            }
            Err(Error::NoSurvivors) | Err(Error::ZeroMass) => {
                out.failures.push(format!("{label}={param}: no surviving paths"));
                HistRow {
                    param,
                    hist: None,
                    tv: None,
                    w1: None,
                }
            }
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn hist_tables(rows: &[HistRow], label: &str) -> (Table, Table) {
    let mut long = Table::new(&[label, "point", "weight", "stderr"]);
    let mut summary = Table::new(&[label, "ess", "survivors", "tv", "w1"]);
    for r in rows {
        if let Some(h) = &r.hist {
            for ((p, w), se) in h.measure.grid().points().iter().zip(h.measure.weights()).zip(&h.stderr) {
                long.push(vec![num(r.param), num(*p), num(*w), num(*se)]);
            }
        }
        summary.push(vec![
            num(r.param),
            r.hist.as_ref().map(|h| num(h.ess)).unwrap_or_default(),
            r.hist.as_ref().map(|h| h.survivors.to_string()).unwrap_or_else(|| "0".into()),
            opt(r.tv),
            opt(r.w1),
        ]);
    }
    (long, summary)
}

pub fn argmin(config: &Config, sink: &mut Sink) -> Result<Outcome> {
    let cfg = config.resolved(Section::Argmin);
    let s = cfg.argmin.clone().expect("resolved");
    let setup = mc_setup(&cfg, &s.sim)?;
    let sampler = s.sim.sampler(cfg.seed);
    let target = &setup.solution.measure;
    let mut out = Outcome::default();

    let weighted: Vec<Result<ArgminHistogram>> = s
        .u
        .iter()
        .map(|&u| estimators::argmin_conditional(&setup.kernel, &setup.grid, &setup.solution, u, &sampler))
        .collect();
    let rows = hist_rows(target, &s.u, weighted, "u", &mut out)?;
    let (long, summary) = hist_tables(&rows, "u");
    sink.csv("argmin.csv", &long)?;
    sink.csv("argmin_summary.csv", &summary)?;
    let mut report_tables = vec![(
        format!("Argmin law given min > u (k={}, n={})", s.sim.k, s.sim.n),
        summary,
    )];

    if s.direct {
        let direct_cfg = sampler.with_stream(sampler.stream + 1);
        let direct: Vec<Result<ArgminHistogram>> = s
            .u
            .iter()
            .map(|&u| estimators::argmin_direct(&setup.kernel, &setup.grid, u, &direct_cfg))
            .collect();
        let mut tmp = Outcome::default();
        let drows = hist_rows(target, &s.u, direct, "u", &mut tmp)?;
        out.notes.extend(tmp.failures.into_iter().map(|f| format!("direct oracle: {f}")));
        let (dlong, dsummary) = hist_tables(&drows, "u");
        sink.csv("argmin_direct.csv", &dlong)?;
        let mut cmp = Table::new(&["u", "max_bin_z", "tv_between"]);
        for (wr, dr) in rows.iter().zip(&drows) {
            if let (Some(w), Some(d)) = (&wr.hist, &dr.hist) {
                let z = w
                    .measure
                    .weights()
                    .iter()
                    .zip(d.measure.weights())
                    .zip(w.stderr.iter().zip(&d.stderr))
                    .map(|((a, b), (sa, sb))| {
                        let se = (sa * sa + sb * sb).sqrt();
                        if se > 0.0 {
                            (a - b).abs() / se
                        } else if a == b {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    })
                    .fold(0.0f64, f64::max);
                cmp.push(vec![num(wr.param), num(z), num(measure::tv_distance(&w.measure, &d.measure)?)]);
            }
        }
        sink.csv("argmin_compare.csv", &cmp)?;
        report_tables.push(("Direct conditioning oracle".into(), dsummary));
        report_tables.push(("Weighted vs direct".into(), cmp));
    }

    let mut mx_rows = Vec::new();
    if !s.x.is_empty() {
        let results = match estimators::mx_conditional_sweep(&setup.kernel, &setup.grid, &setup.solution, &s.x, &sampler) {
            Ok(v) => v.into_iter().map(Ok).collect(),
            Err(Error::NoSurvivors) | Err(Error::ZeroMass) => s.x.iter().map(|_| Err(Error::NoSurvivors)).collect(),
            Err(e) => return Err(e),
        };
        mx_rows = hist_rows(target, &s.x, results, "x", &mut out)?;
        let (mlong, msummary) = hist_tables(&mx_rows, "x");
        sink.csv("mx.csv", &mlong)?;
        sink.csv("mx_summary.csv", &msummary)?;
        report_tables.push((format!("m_x law (k={}, n={})", s.sim.k, s.sim.n), msummary));
    }

    #[derive(Serialize)]
    struct Entry<'a> {
        param: f64,
        tv: Option<f64>,
        wasserstein1: Option<f64>,
        histogram: Option<&'a ArgminHistogram>,
    }
    fn entries(rows: &[HistRow]) -> Vec<Entry<'_>> {
        rows.iter()
            .map(|r| Entry {
                param: r.param,
                tv: r.tv,
                wasserstein1: r.w1,
                histogram: r.hist.as_ref(),
            })
            .collect()
    }
    #[derive(Serialize)]
    struct ArgminJson<'a> {
        optimal: &'a GridMeasure,
        sigma_star_sq: f64,
        ess_threshold: f64,
        conditional: Vec<Entry<'a>>,
        mx: Vec<Entry<'a>>,
    }
    sink.json(
        "argmin.json",
        &ArgminJson {
            optimal: target,
            sigma_star_sq: setup.solution.sigma_star_sq,
            ess_threshold: ESS_THRESHOLD,
            conditional: entries(&rows),
            mx: entries(&mx_rows),
        },
    )?;
    dump_paths(&cfg, &s.sim, &setup, sink, &mut out)?;
    for (_, t) in &mut report_tables {
        for r in &mut t.rows {
            for c in r.iter_mut().skip(1) {
                if let Ok(v) = c.parse::<f64>() {
                    if c.contains('.') || c.contains('e') {
                        *c = short(v);
                    }
                }
            }
        }
    }
    out.tables.extend(report_tables);
    Ok(out.finish(sink))
}
