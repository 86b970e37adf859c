//! Named, reproducible experiments: configuration files, the catalog, and
//! report bundles (CSV/JSON outputs, `summary.txt`, `manifest.json`).
//!
//! A config is a TOML file with a master seed and one `[experiment]` table
//! whose `id` picks the experiment:
//!
//! ```
//! use noncrit::harness::{ExperimentConfig, Experiment};
//!
//! let config = ExperimentConfig::from_toml_str(
//!     r#"
//!     seed = 7
//!     [experiment]
//!     id = "e3"
//!     path_lengths = [2, 3]
//!     rectangles = []
//!     "#,
//! )
//! .unwrap();
//! assert!(matches!(config.experiment, Experiment::E3(_)));
//! ```

mod catalog;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use catalog::{find_experiment, list_experiments, CatalogEntry};
pub use experiments::{
    DharParams, DharVolume, Experiment, FreeEnergyParams, PinningParams, RecurrentCountParams, SurvivalTailParams,
    TreeAvalancheParams, TrivialParams, VerdictParams, WalkGreenParams,
};
pub use output::{Check, FileDigest, RunReport, Status};

/// Environment variable naming the directory that relative output
/// directories are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "NONCRIT_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every task derives its own stream from it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root. Defaults to the experiment id.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[serde(default)]
    pub threads: Option<usize>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        ExperimentConfig {
            seed,
            output_dir: None,
            threads: None,
            experiment,
        }
    }

    /// Parses and validates a TOML config. Errors name the offending field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.into_inner().message().to_string();
            match locate_experiment_error(text) {
                Some((inner, message)) if path == "experiment" && inner != "." => {
                    Error::config(format!("experiment.{inner}"), message)
                }
                _ => Error::config(path, message),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        self.experiment.validate()
    }

    /// `output_dir` (or the experiment id) resolved against `root`.
    pub fn output_path(&self, root: &Path) -> PathBuf {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(self.experiment.id()));
        root.join(dir)
    }
}

fn locate_experiment_error(text: &str) -> Option<(String, String)> {
    let mut table: toml::Table = text.parse().ok()?;
    let toml::Value::Table(mut body) = table.remove("experiment")? else {
        return None;
    };
    let id = body.remove("id")?;
    experiments::locate_error(id.as_str()?, toml::Value::Table(body))
}

/// The output root from [`OUTPUT_ROOT_ENV`], or the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Runs `config` with outputs under [`output_root`].
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    run_in(config, &output_root())
}

/// Runs `config` with outputs under `root`.
pub fn run_in(config: &ExperimentConfig, root: &Path) -> Result<RunReport> {
    config.validate()?;
    let dir = config.output_path(root);
    std::fs::create_dir_all(&dir)?;
    let started = Instant::now();
    let mut outputs = output::Outputs::new(dir.clone());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let outcome = pool.install(|| config.experiment.execute(config.seed, &mut outputs))?;
    output::finish(config, outcome, outputs, started.elapsed().as_secs_f64())
}

/// Writes the toppling matrices (`<name>.matrix.txt`, `i j value`) and edge
/// lists (`<name>.edges.txt`, `u v`) of every volume `config` describes.
pub fn export_matrix(config: &ExperimentConfig, root: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let volumes = config.experiment.volumes(config.seed)?;
    if volumes.is_empty() {
        return Err(Error::config(
            "experiment.id",
            format!("`{}` has no finite volume to export", config.experiment.id()),
        ));
    }
    let dir = config.output_path(root);
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for volume in volumes {
        let matrix_path = dir.join(format!("{}.matrix.txt", volume.name));
        let file = std::io::BufWriter::new(std::fs::File::create(&matrix_path)?);
        volume.matrix.write_coordinate(file)?;
        let edge_path = dir.join(format!("{}.edges.txt", volume.name));
        let file = std::io::BufWriter::new(std::fs::File::create(&edge_path)?);
        crate::topology::write_edge_list(volume.graph.as_ref(), file)?;
        written.push(matrix_path);
        written.push(edge_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_is_named() {
        let err = ExperimentConfig::from_toml_str("seed = 1\n[experiment]\nid = \"e1\"\nn_walkz = 3\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("n_walkz"), "{text}");
    }

    #[test]
    fn semantic_errors_carry_the_path() {
        let err = ExperimentConfig::from_toml_str("[experiment]\nid = \"e1\"\nn_walks = 1\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "experiment.n_walks"),
            e => panic!("{e}"),
        }
        let err = ExperimentConfig::from_toml_str("threads = 0\n[experiment]\nid = \"trivial\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "threads"));
    }

    #[test]
    fn round_trip() {
        let config = ExperimentConfig::new(Experiment::E7(PinningParams::default()), 3);
        let back = ExperimentConfig::from_toml_str(&config.to_toml_string()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn output_dir_defaults_to_id() {
        let config = ExperimentConfig::new(Experiment::Trivial(TrivialParams::default()), 0);
        assert_eq!(config.output_path(Path::new("/out")), PathBuf::from("/out/trivial"));
    }
}
