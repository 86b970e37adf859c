use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::stats::MeanEstimate;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    /// 0 pass, 2 inconclusive, 1 fail.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Inconclusive => 2,
            Status::Fail => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::Fail => "FAIL",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    pub(crate) fn new(name: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }
}

/// What an experiment hands back besides the files it wrote.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub checks: Vec<Check>,
    /// Extra lines for the summary, e.g. comparison tables.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub dir: PathBuf,
    pub files: Vec<FileDigest>,
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

/// Files written into one output directory, in creation order.
pub(crate) struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Outputs { dir, files: Vec::new() }
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let file = File::create(self.dir.join(name))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Rows `n_or_t,estimate,stderr,n_samples`.
    pub fn estimates(&mut self, name: &str, points: &[(f64, MeanEstimate)]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(["n_or_t", "estimate", "stderr", "n_samples"])?;
        for (x, e) in points {
            w.write_record([x.to_string(), e.mean.to_string(), e.stderr.to_string(), e.n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn digest(path: &std::path::Path, name: &str) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest {
        path: name.to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Writes `summary.txt` and `manifest.json` and assembles the report.
pub(crate) fn finish(config: &ExperimentConfig, outcome: Outcome, mut outputs: Outputs, wall: f64) -> Result<RunReport> {
    let status = outcome
        .checks
        .iter()
        .map(|c| c.status)
        .max()
        .unwrap_or(Status::Inconclusive);
    let id = config.experiment.id();
    let mut summary = outputs.create("summary.txt")?;
    writeln!(summary, "experiment: {id}")?;
    if let Ok(entry) = super::find_experiment(id) {
        writeln!(summary, "claim: {}", entry.title)?;
        writeln!(summary, "see: {}", entry.anchor)?;
    }
    writeln!(summary, "seed: {}", config.seed)?;
    writeln!(summary, "status: {}", status.label())?;
    writeln!(summary)?;
    for c in &outcome.checks {
        writeln!(summary, "{:<13} {}: {}", c.status.label(), c.name, c.detail)?;
    }
    if !outcome.notes.is_empty() {
        writeln!(summary)?;
        for line in &outcome.notes {
            writeln!(summary, "{line}")?;
        }
    }
    summary.flush()?;
    drop(summary);
    let files = outputs
        .files
        .iter()
        .map(|name| digest(&outputs.dir.join(name), name))
        .collect::<Result<Vec<_>>>()?;
    let manifest = serde_json::json!({
        "experiment": id,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "threads": config.threads,
        "config": config,
        "status": status,
        "partial": status != Status::Pass,
        "wall_time_secs": wall,
        "checks": outcome.checks,
        "files": files,
    });
    let mut w = BufWriter::new(File::create(outputs.dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(RunReport {
        experiment: id.to_string(),
        status,
        checks: outcome.checks,
        notes: outcome.notes,
        dir: outputs.dir,
        files,
        wall_time_secs: wall,
    })
}
