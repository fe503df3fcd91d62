//! Shared argument parsing and file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use troop::{Checkpoint, InputSignal, Model, ModelFile, TrajectoryDataset};

/// `toy`, `file:<path>` or a bare path to a model JSON file.
pub fn load_model(spec: &str) -> Result<Model> {
    if spec == "toy" {
        return Ok(Model::Quadratic(troop::toy_model()));
    }
    let path = spec.strip_prefix("file:").unwrap_or(spec);
    let text = read(Path::new(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| troop::Error::InvalidData(format!("model JSON: {e}")))?;
    Ok(file.into_model()?)
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    Ok(TrajectoryDataset::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))?)
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `path` with `suffix` appended to the full file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// `sin:<amplitude>:<frequency>`.
pub fn parse_input(spec: &str) -> Result<InputSignal> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["sin", a, w] => Ok(InputSignal::Sine {
            amplitude: parse_f64(a, "amplitude")?,
            frequency: parse_f64(w, "frequency")?,
        }),
        ["zero"] => Ok(InputSignal::Zero),
        _ => Err(invalid(format!("input must look like sin:<amplitude>:<frequency>, got '{spec}'"))),
    }
}

pub fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| invalid(format!("{what} '{s}' is not a number")))?;
    if !v.is_finite() {
        bail!(invalid(format!("{what} must be finite")));
    }
    Ok(v)
}

/// Input errors surface as validation failures (exit code 2).
pub fn invalid(msg: String) -> anyhow::Error {
    troop::Error::InvalidConfig(msg).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Sampled,
    Integrated,
}

impl From<ModeArg> for troop::ObjectiveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sampled => troop::ObjectiveMode::Sampled,
            ModeArg::Integrated => troop::ObjectiveMode::Integrated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportArg {
    Exponential,
    Retraction,
}

impl From<TransportArg> for troop::TransportMode {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Exponential => troop::TransportMode::Exponential,
            TransportArg::Retraction => troop::TransportMode::Retraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Mean,
    Sum,
}

impl From<WeightingArg> for troop::Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Mean => troop::Weighting::Mean,
            WeightingArg::Sum => troop::Weighting::Sum,
        }
    }
}
