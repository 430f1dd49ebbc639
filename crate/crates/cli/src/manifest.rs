//! Run manifest: everything needed to reproduce a run exactly, written to
//! the output directory before compute starts and finalized afterwards.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use quatkgc_core::TrainConfig;

#[derive(Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Fully resolved configuration; no defaults left implicit.
    pub config: TrainConfig,
    pub threads: usize,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        dataset: &Path,
        output_dir: &Path,
        config: &TrainConfig,
        threads: usize,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            dataset: dataset.to_path_buf(),
            output_dir: output_dir.to_path_buf(),
            config: config.clone(),
            threads,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).context("encode manifest")?;
        fs::write(&path, body).with_context(|| format!("write {}", path.display()))?;
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.write(dir)
    }
}
