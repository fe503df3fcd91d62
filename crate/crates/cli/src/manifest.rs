//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::args::{sibling, write};

/// Enough information to rerun a command exactly.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    command: &'static str,
    started: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &'static str) -> Self {
        Self { command, started: Instant::now() }
    }

    /// Writes `<primary>.manifest.json`.
    pub fn finish(
        self,
        config: impl Serialize,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        seed: Option<u64>,
        primary: &Path,
    ) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            inputs,
            outputs,
            seed,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        write(&sibling(primary, ".manifest.json"), &serde_json::to_string_pretty(&manifest)?)
    }
}
