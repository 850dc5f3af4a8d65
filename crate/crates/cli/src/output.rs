use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use coarsekit::trajectory::fmt_sci;
use coarsekit::Trajectory;
use serde::Serialize;

use crate::error::CliError;

pub type Metrics = BTreeMap<String, f64>;

/// Files and named metrics produced by one run.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub metrics: Metrics,
    pub quiet: bool,
}

impl RunOutput {
    pub fn new(dir: &Path, quiet: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), metrics: Metrics::new(), quiet })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
    }

    pub fn csv(&mut self, name: &str, tr: &Trajectory) -> Result<(), CliError> {
        self.text(name, &tr.to_csv_string())
    }

    /// Columns from equally long vectors.
    pub fn table(&mut self, name: &str, header: &[&str], cols: &[&[f64]]) -> Result<(), CliError> {
        let n = cols.first().map_or(0, |c| c.len());
        let mut s = header.join(",");
        s.push('\n');
        for i in 0..n {
            let row: Vec<String> = cols.iter().map(|c| fmt_sci(c[i])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.text(name, &s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("serializable");
        body.push('\n');
        self.text(name, &body)
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn flag(&mut self, name: impl Into<String>, value: bool) {
        self.metric(name, if value { 1.0 } else { 0.0 });
    }

    /// One summary line on stdout.
    pub fn stage(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    pub fn finish(&mut self) -> Result<(), CliError> {
        let metrics = self.metrics.clone();
        self.json("metrics.json", &metrics)
    }
}

/// Metric-name form of a number: `5`, `0.3`, `10000`.
pub fn key(v: f64) -> String {
    format!("{v}")
}
