//! CSV/JSON writers and the run manifest.
//!
//! Floats are written with Rust's shortest round-trip formatting, so output
//! bytes depend only on the values.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concentration::TailReport;
use crate::error::{Error, Result};
use crate::experiment::{ReplicationRecord, TailCurve};
use crate::packing::PackBoundReport;

pub const MANIFEST_FILE: &str = "manifest.json";

/// An output directory that remembers the files written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>> {
        let path = self.register(name);
        Ok(csv::Writer::from_path(path)?)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.register(name);
        write_json(&path, value)
    }

    pub fn tail_csv(&mut self, name: &str, report: &TailReport) -> Result<()> {
        write_tail_csv(self.csv(name)?, report)
    }

    pub fn fitted_tail_csv(&mut self, name: &str, report: &TailReport) -> Result<()> {
        write_fitted_tail_csv(self.csv(name)?, report)
    }

    /// Writes the manifest last, with digests of every registered file.
    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        let mut files = self.files.clone();
        files.sort();
        manifest.outputs = files
            .iter()
            .map(|name| {
                Ok(OutputDigest {
                    file: name.clone(),
                    sha256: sha256_file(&self.root.join(name))?,
                })
            })
            .collect::<Result<_>>()?;
        manifest.finished = timestamp();
        write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Columns: threshold, exceed_count, reps, empirical, ci_lower, ci_upper, bound.
pub fn write_tail_csv<W: Write>(mut w: csv::Writer<W>, report: &TailReport) -> Result<()> {
    w.write_record(["threshold", "exceed_count", "reps", "empirical", "ci_lower", "ci_upper", "bound"])?;
    for i in 0..report.grid.len() {
        w.write_record([
            fmt(report.grid[i]),
            report.exceed_counts[i].to_string(),
            report.reps.to_string(),
            fmt(report.empirical[i]),
            fmt(report.ci_lower[i]),
            fmt(report.ci_upper[i]),
            fmt(report.bound[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: x, exceed_count, reps, empirical, ci_lower, ci_upper, fitted_rate.
pub fn write_fitted_tail_csv<W: Write>(mut w: csv::Writer<W>, report: &TailReport) -> Result<()> {
    let rate = report.fit.as_ref().map(|f| fmt(f.c2)).unwrap_or_default();
    w.write_record(["x", "exceed_count", "reps", "empirical", "ci_lower", "ci_upper", "fitted_rate"])?;
    for i in 0..report.grid.len() {
        w.write_record([
            fmt(report.grid[i]),
            report.exceed_counts[i].to_string(),
            report.reps.to_string(),
            fmt(report.empirical[i]),
            fmt(report.ci_lower[i]),
            fmt(report.ci_upper[i]),
            rate.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: delta, pack, bound, ratio.
pub fn write_pack_csv<W: Write>(mut w: csv::Writer<W>, report: &PackBoundReport) -> Result<()> {
    w.write_record(["delta", "pack", "bound", "ratio"])?;
    for row in &report.rows {
        w.write_record([fmt(row.delta), row.pack.to_string(), fmt(row.bound), fmt(row.ratio)])?;
    }
    w.flush()?;
    Ok(())
}

pub const RECORD_COLUMNS: [&str; 8] = [
    "index",
    "theta_hat",
    "g_hat_min",
    "g_loss_hat",
    "g_loss_mu",
    "Z",
    "m_excess",
    "d_hat",
];

pub fn write_record_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(RECORD_COLUMNS)?;
    Ok(())
}

pub fn write_records<W: Write>(w: &mut csv::Writer<W>, records: &[ReplicationRecord]) -> Result<()> {
    for r in records {
        w.write_record([
            r.index.to_string(),
            fmt(r.theta_hat),
            fmt(r.g_hat_min),
            fmt(r.g_loss_hat),
            fmt(r.g_loss_mu),
            fmt(r.z),
            fmt(r.m_excess),
            fmt(r.d_hat),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: index, x, omega, chain_failures.
pub fn write_omega_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["index", "x", "omega", "chain_failures"])?;
    Ok(())
}

pub fn write_omega<W: Write>(w: &mut csv::Writer<W>, records: &[ReplicationRecord], x_grid: &[f64]) -> Result<()> {
    for r in records {
        for (j, &x) in x_grid.iter().enumerate() {
            w.write_record([
                r.index.to_string(),
                fmt(x),
                u8::from(r.omega[j]).to_string(),
                r.chain_failures[j].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: x, threshold, exceed_count, reps, empirical, ci_lower, ci_upper.
pub fn write_tail_curve<W: Write>(mut w: csv::Writer<W>, curve: &TailCurve) -> Result<()> {
    w.write_record(["x", "threshold", "exceed_count", "reps", "empirical", "ci_lower", "ci_upper"])?;
    for i in 0..curve.x.len() {
        w.write_record([
            fmt(curve.x[i]),
            fmt(curve.threshold[i]),
            curve.exceed_counts[i].to_string(),
            curve.reps.to_string(),
            fmt(curve.empirical[i]),
            fmt(curve.ci_lower[i]),
            fmt(curve.ci_upper[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn start(subcommand: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config,
            seed,
            started: timestamp(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|_| Error::MissingManifest(dir.display().to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::field(path.display().to_string(), e.to_string()))
    }

    /// Recomputes every digest and reports the files that no longer match.
    pub fn stale_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| sha256_file(&dir.join(&o.file)).ok().as_deref() != Some(o.sha256.as_str()))
            .map(|o| o.file.clone())
            .collect()
    }
}

/// RFC 3339 UTC time, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
