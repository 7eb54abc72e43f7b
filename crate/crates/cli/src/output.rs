//! CSV and manifest writers.
//!
//! Floats are written with `{:e}`, the shortest scientific form that parses
//! back to the same value.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use raceway_core::optimizer::OptimizationTrace;
use raceway_core::Evaluation;
use serde::Serialize;

/// Cell value for a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

fn fmt_cell(c: &Cell) -> String {
    match c {
        Cell::Real(v) => format!("{v:e}"),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

/// A header and rows of cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(fmt_cell).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    }
}

/// Flow, trajectory depths, light and C along the raceway.
///
/// Columns `x,h,u,eta,zb,z_1..,I_1..,C_1..`; extra laps append `C<lap>_<i>`.
pub fn emit_profile_csv(eval: &Evaluation, path: &Path) -> io::Result<()> {
    let flow = &eval.flow;
    let bundle = &eval.bundle;
    let nz = bundle.len();
    let mut header: Vec<String> = ["x", "h", "u", "eta", "zb"].map(String::from).to_vec();
    header.extend((1..=nz).map(|i| format!("z_{i}")));
    header.extend((1..=nz).map(|i| format!("I_{i}")));
    header.extend((1..=nz).map(|i| format!("C_{i}")));
    for lap in 2..=eval.states.lap_count() {
        header.extend((1..=nz).map(|i| format!("C{lap}_{i}")));
    }

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for n in 0..flow.nodes() {
        line.clear();
        for v in [flow.x[n], flow.h[n], flow.u[n], flow.eta[n], flow.zb[n]] {
            push_real(&mut line, v);
        }
        for z in &bundle.depth {
            push_real(&mut line, z[n]);
        }
        for i in &bundle.light {
            push_real(&mut line, i[n]);
        }
        for lap in &eval.states.laps {
            for c in lap {
                push_real(&mut line, c[n]);
            }
        }
        line.pop();
        writeln!(w, "{line}")?;
    }
    w.flush()
}

fn push_real(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v:e},");
}

/// `iter,objective_d1,grad_norm,min_h` per optimization iteration.
pub fn emit_trace_csv(trace: &OptimizationTrace, path: &Path) -> io::Result<()> {
    let mut t = Table::new(["iter", "objective_d1", "grad_norm", "min_h"]);
    for r in &trace.records {
        t.push(vec![
            r.iter.into(),
            r.objective_d1.into(),
            r.grad_norm.into(),
            r.min_h.into(),
        ]);
    }
    t.write(path)
}

/// Fourier coefficients of a shape: `k,coefficient`, with k = 0 for a₀.
pub fn emit_shape_csv(shape: &raceway_core::FourierShape, path: &Path) -> io::Result<()> {
    let mut t = Table::new(["k", "coefficient"]);
    t.push(vec![0usize.into(), shape.a0.into()]);
    for (k, c) in shape.coeffs.iter().enumerate() {
        t.push(vec![(k + 1).into(), (*c).into()]);
    }
    t.write(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: String,
    pub wall_clock_seconds: f64,
    pub termination: Option<String>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}

/// Output directory that remembers every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_owned(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for `name`, registered for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        debug_assert!(!self.files.iter().any(|f| f == name), "{name} written twice");
        self.files.push(name.to_owned());
        self.root.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}
