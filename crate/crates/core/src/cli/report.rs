//! Markdown report over a list of studies. Each study runs
//! solve, analytic cross-check, tail sweep, diagnose and argmin (the steps
//! whose sections it configures) into `studies/<name>/`; a failing step is
//! marked and the remaining steps and studies still run.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::commands::{self, Outcome};
use super::config::Config;
use super::output::Sink;
use crate::error::Result;

type Step = fn(&Config, &mut Sink) -> Result<Outcome>;

struct StepResult {
    name: &'static str,
    outcome: std::result::Result<Outcome, String>,
}

struct StudyResult {
    name: String,
    steps: Vec<StepResult>,
}

impl StudyResult {
    fn failed(&self) -> bool {
        self.steps
            .iter()
            .any(|s| s.outcome.as_ref().map_or(true, |o| !o.failures.is_empty()))
    }
}

fn steps_for(study: &Config) -> Vec<(&'static str, Step)> {
    let mut steps: Vec<(&'static str, Step)> = vec![("solve", commands::solve)];
    if study.analytic.is_some() {
        steps.push(("analytic", commands::analytic));
    }
    if study.tail.is_some() {
        steps.push(("tail", commands::tail));
    }
    if study.smallball.is_some() {
        steps.push(("smallball", commands::smallball));
    }
    if study.diagnose.is_some() {
        steps.push(("diagnose", commands::diagnose));
    }
    if study.argmin.is_some() {
        steps.push(("argmin", commands::argmin));
    }
    steps
}

fn run_study(study: &Config, root: &Path) -> StudyResult {
    let name = study.name.clone().unwrap_or_default();
    let dir = root.join("studies").join(&name);
    let steps = steps_for(study)
        .into_iter()
        .map(|(step, f)| {
            let outcome = Sink::new(&dir, step, study)
                .and_then(|mut sink| f(study, &mut sink))
                .map_err(|e| e.to_string());
            StepResult { name: step, outcome }
        })
        .collect();
    StudyResult { name, steps }
}

/// Writes `report.md`; returns the number of studies with a failed step.
pub fn report(config: &Config, out_dir: &Path) -> Result<(usize, Vec<std::path::PathBuf>)> {
    let studies = config.expand_studies();
    let results: Vec<StudyResult> = if config.concurrent {
        studies.par_iter().map(|s| run_study(s, out_dir)).collect()
    } else {
        studies.iter().map(|s| run_study(s, out_dir)).collect()
    };

    let mut md = String::from("# Gaussian minimum report\n\n");
    let _ = writeln!(md, "Seed: {}\n", config.seed);
    let _ = writeln!(md, "```json\n{}\n```\n", serde_json::to_string_pretty(config)?);
    if !results.is_empty() {
        md.push_str("| study | status |\n|---|---|\n");
        for r in &results {
            let _ = writeln!(md, "| {} | {} |", r.name, if r.failed() { "FAILED" } else { "ok" });
        }
        md.push('\n');
    }
    for (r, study) in results.iter().zip(&studies) {
        let _ = writeln!(md, "## {}\n", r.name);
        if let Some(k) = &study.kernel {
            let _ = writeln!(md, "Kernel: `{}`", serde_json::to_string(k)?);
        }
        if let Some([a, b]) = study.interval {
            let _ = writeln!(md, "Interval: [{a}, {b}]");
        }
        let _ = writeln!(md, "Seed: {}\n", study.seed);
        for step in &r.steps {
            let _ = writeln!(md, "### {}\n", step.name);
            match &step.outcome {
                Err(e) => {
                    let _ = writeln!(md, "**FAILED**: {e}\n");
                }
                Ok(o) => {
                    for f in &o.failures {
                        let _ = writeln!(md, "**FAILED**: {f}\n");
                    }
                    for n in &o.notes {
                        let _ = writeln!(md, "Note: {n}\n");
                    }
                    for (title, table) in &o.tables {
                        let _ = writeln!(md, "{title}\n\n{}", table.to_markdown());
                    }
                    for f in o.files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")) {
                        let rel = f.strip_prefix(out_dir).unwrap_or(f);
                        let rel = rel.to_string_lossy().replace('\\', "/");
                        let _ = writeln!(md, "![{}]({rel})\n", step.name);
                    }
                }
            }
        }
    }
    let mut sink = Sink::new(out_dir, "report", config)?;
    sink.text("report.md", &md)?;
    let failed = results.iter().filter(|r| r.failed()).count();
    Ok((failed, sink.written().to_vec()))
}
