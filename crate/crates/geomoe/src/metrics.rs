//! The training metrics log.
//!
//! Tab-separated text. Lines starting with `#` carry the effective
//! configuration; the first non-comment line names the columns:
//! `iteration cls reg load total`, then one `mass_f{moe}_e{expert}` column per
//! expert of every F-MoE. Each later line is one iteration.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use geomoe_core::train::IterationRecord;

use crate::error::{Error, Result};

pub struct MetricsLog {
    out: BufWriter<File>,
    path: PathBuf,
    header_pending: bool,
}

fn comment_block(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

impl MetricsLog {
    /// Starts a fresh log, echoing `config` into its comment header.
    pub fn create(path: &Path, config: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self { out: BufWriter::new(file), path: path.to_path_buf(), header_pending: true };
        log.write(&comment_block(config))?;
        Ok(log)
    }

    /// Appends to an existing log when resuming a run.
    pub fn append(path: &Path, config: &str, iteration: usize) -> Result<Self> {
        let exists = path.exists();
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self { out: BufWriter::new(file), path: path.to_path_buf(), header_pending: !exists };
        log.write(&format!("# resumed at iteration {iteration}\n"))?;
        log.write(&comment_block(config))?;
        Ok(log)
    }

    fn write(&mut self, s: &str) -> Result<()> {
        self.out.write_all(s.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn record(&mut self, r: &IterationRecord) -> Result<()> {
        if self.header_pending {
            let mut h = String::from("iteration\tcls\treg\tload\ttotal");
            for (f, m) in r.expert_mass.iter().enumerate() {
                for e in 0..m.len() {
                    h.push_str(&format!("\tmass_f{f}_e{e}"));
                }
            }
            h.push('\n');
            self.write(&h)?;
            self.header_pending = false;
        }
        let mut line = format!("{}\t{}\t{}\t{}\t{}", r.iteration, r.classification, r.regression, r.load, r.total);
        for v in r.expert_mass.iter().flatten() {
            line.push_str(&format!("\t{v}"));
        }
        line.push('\n');
        self.write(&line)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One parsed log line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub classification: f64,
    pub regression: f64,
    pub load: f64,
    pub total: f64,
    /// Flattened per-expert masses, F-MoE major.
    pub expert_mass: Vec<f64>,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let bad = || Error::format(path, format!("line {}: malformed metrics record", lineno + 1));
        let mut fields = line.split('\t');
        let iteration = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let values = fields.map(|s| s.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<f64>>>()?;
        if values.len() < 4 {
            return Err(bad());
        }
        rows.push(MetricsRow {
            iteration,
            classification: values[0],
            regression: values[1],
            load: values[2],
            total: values[3],
            expert_mass: values[4..].to_vec(),
        });
    }
    Ok(rows)
}

/// Fraction of consecutive non-overlapping windows whose mean classification
/// loss does not exceed the previous window's mean.
///
/// Returns `None` when fewer than two full windows exist.
pub fn decreasing_window_fraction(classification: &[f64], window: usize) -> Option<f64> {
    let means: Vec<f64> =
        classification.chunks_exact(window.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    if means.len() < 2 {
        return None;
    }
    let ok = means.windows(2).filter(|w| w[1] <= w[0]).count();
    Some(ok as f64 / (means.len() - 1) as f64)
}
