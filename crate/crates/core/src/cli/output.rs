//! Output files. Every file starts with the command, seed and the resolved
//! config: `#` comment lines in CSV, top-level fields in JSON, an XML
//! comment in SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Config;
use crate::error::Result;

pub struct Sink {
    dir: PathBuf,
    command: &'static str,
    seed: u64,
    config: String,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, command: &'static str, config: &Config) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            seed: config.seed,
            config: serde_json::to_string(config)?,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn header(&self, prefix: &str, suffix: &str) -> String {
        format!(
            "{prefix}gaussmin {}{suffix}\n{prefix}seed: {}{suffix}\n{prefix}config: {}{suffix}\n",
            self.command, self.seed, self.config
        )
    }

    fn put(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes `columns` then `rows` under the comment header.
    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let body = self.header("# ", "") + &table.to_csv();
        self.put(name, &body)
    }

    /// Raw CSV body (already has its own column line) under the header.
    pub fn csv_raw(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let body = self.header("# ", "") + body;
        self.put(name, &body)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            command: &'a str,
            seed: u64,
            config: serde_json::Value,
            result: &'a T,
        }
        let w = Wrapped {
            command: self.command,
            seed: self.seed,
            config: serde_json::from_str(&self.config)?,
            result,
        };
        let mut body = serde_json::to_string_pretty(&w)?;
        body.push('\n');
        self.put(name, &body)
    }

    pub fn svg(&mut self, name: &str, svg: &str) -> Result<PathBuf> {
        // `--` may not appear inside an XML comment
        let header = format!(
            "<!-- gaussmin {} -->\n<!-- seed: {} -->\n<!-- config: {} -->\n",
            self.command,
            self.seed,
            self.config.replace("--", "- -")
        );
        let body = match svg.split_once('\n') {
            Some((first, rest)) => format!("{first}\n{header}{rest}"),
            None => format!("{header}{svg}"),
        };
        self.put(name, &body)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        self.put(name, body)
    }
}

/// Column-oriented table rendered as CSV or markdown.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| {} |", self.columns.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(self.columns.len()));
        for r in &self.rows {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }
}

/// Shortest round-trip decimal form (`.` separator, no locale).
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Fixed-width form for markdown tables.
pub fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-3..1e5).contains(&a) {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
