//! CSV, JSON and manifest writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::RunError;

/// Floats with 17 significant digits, so values round-trip exactly.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}
impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::I(v as u64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns);
        let parts: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::F(v) => float(v),
                Cell::I(v) => v.to_string(),
                Cell::S(s) => s,
            })
            .collect();
        let _ = writeln!(self.text, "{}", parts.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// One `--check` outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    /// `|measured - expected| <= tolerance`.
    pub fn near(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance;
        Self { name: name.into(), measured, expected, tolerance, pass }
    }

    /// `measured >= expected`; the tolerance field is reported as zero.
    pub fn at_least(name: impl Into<String>, measured: f64, expected: f64) -> Self {
        Self { name: name.into(), measured, expected, tolerance: 0.0, pass: measured >= expected }
    }
}

/// Artifact directory of one subcommand; records every file it writes.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(root: &Path, subcommand: &str) -> Result<Self, RunError> {
        let dir = root.join(subcommand);
        std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), RunError> {
        let p = self.path(name);
        std::fs::write(&p, csv.as_str()).map_err(|e| RunError::io(&p, e))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Serialize(e.to_string()))?;
        std::fs::write(&p, text + "\n").map_err(|e| RunError::io(&p, e))
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}
