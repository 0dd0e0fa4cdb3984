//! Command-line front end.
//!
//! Exit codes: 0 success, 2 numerical or statistical failure (outputs that
//! could be produced are still written), 3 usage or config failure.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use commands::Outcome;
use config::Config;
use output::Sink;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gaussmin", version, about = "Optimal measures and Monte Carlo for minima of Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal grid measures over a dyadic refinement.
    Solve,
    /// Closed-form optimal measure (ou, modulated_bm).
    Analytic,
    /// Tail of the minimum by crude and change-of-measure Monte Carlo.
    Tail,
    /// Conditional law of the argmin location.
    Argmin,
    /// Small-ball probabilities.
    Smallball,
    /// Correction-term exponent fit with a log-log plot.
    Diagnose,
    /// Markdown report over a list of studies or a preset.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Analytic => "analytic",
            Self::Tail => "tail",
            Self::Argmin => "argmin",
            Self::Smallball => "smallball",
            Self::Diagnose => "diagnose",
            Self::Report => "report",
        }
    }
}

/// Exit code for an error that stopped a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Refine { source, .. } => exit_code(source),
        Error::NotConverged { .. }
        | Error::CertificateFailed { .. }
        | Error::FactorizationFailed { .. }
        | Error::NoSurvivors
        | Error::Hypothesis(_)
        | Error::ZeroMass => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn report_outcome(o: &Outcome) -> i32 {
    for f in &o.files {
        println!("wrote {}", f.display());
    }
    for n in &o.notes {
        eprintln!("note: {n}");
    }
    for f in &o.failures {
        eprintln!("warning: {f}");
    }
    if o.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    }
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut config = Config::load(path)?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    if cli.command == Command::Report {
        let (failed, files) = report::report(&config, &cli.out)?;
        for f in files {
            println!("wrote {}", f.display());
        }
        if failed > 0 {
            eprintln!("warning: {failed} stud{} had failures", if failed == 1 { "y" } else { "ies" });
            return Ok(EXIT_NUMERIC);
        }
        return Ok(EXIT_OK);
    }
    let name = cli.command.name();
    let mut sink = Sink::new(&cli.out, name, &config)?;
    let outcome = match cli.command {
        Command::Solve => commands::solve(&config, &mut sink),
        Command::Analytic => commands::analytic(&config, &mut sink),
        Command::Tail => commands::tail(&config, &mut sink),
        Command::Argmin => commands::argmin(&config, &mut sink),
        Command::Smallball => commands::smallball(&config, &mut sink),
        Command::Diagnose => commands::diagnose(&config, &mut sink),
        Command::Report => unreachable!(),
    };
    match outcome {
        Ok(o) => Ok(report_outcome(&o)),
        Err(e) => {
            for f in sink.written() {
                println!("wrote {}", f.display());
            }
            Err(e)
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let run = || match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    match cli.threads {
        None => run(),
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            EXIT_CONFIG
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: cannot start {n} threads: {e}");
                EXIT_CONFIG
            }
        },
    }
}
