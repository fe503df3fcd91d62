//! `troop evaluate`: reduced-model predictions against full-order data.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use nalgebra::DVector;
use serde::Serialize;
use troop::integrate::refine_grid;
use troop::{sample_full_order, uniform_times, DynamicalSystem, ReducedModel, Trajectory};

use crate::args::{invalid, load_checkpoint, load_dataset, load_model, parse_input, sibling};
use crate::manifest::ManifestBuilder;

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Checkpoint to evaluate; repeat for several models.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// `toy` or a model JSON file.
    #[arg(long, default_value = "toy")]
    pub model: String,
    /// Dataset with the reference trajectories.
    #[arg(long, conflicts_with = "input")]
    pub data: Option<PathBuf>,
    /// Forced response from rest instead of a dataset: `sin:<amplitude>:<frequency>`.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// RK4 steps between consecutive samples.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Mean and worst normalized error of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub label: String,
    pub mean_normalized_error: f64,
    pub max_normalized_error: f64,
}

fn reference(args: &EvaluateArgs, sys: &dyn DynamicalSystem) -> Result<Vec<Trajectory>> {
    match (&args.data, &args.input) {
        (Some(path), None) => Ok(load_dataset(path)?.trajectories().to_vec()),
        (None, Some(spec)) => {
            if args.samples == 0 || !(args.horizon > 0.0) {
                return Err(invalid("samples and horizon must be positive".into()));
            }
            let input = parse_input(spec)?;
            let times = uniform_times(args.samples, args.horizon);
            let x0 = DVector::zeros(sys.state_dim());
            Ok(vec![sample_full_order(sys, spec.clone(), x0, input, &times, args.steps)?])
        }
        _ => Err(invalid("give exactly one of --data or --input".into())),
    }
}

fn label_of(path: &Path, stored: Option<&str>) -> String {
    stored
        .map(str::to_string)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Predictions at the sample times, or `None` if the reduced model blows up.
fn predict(rom: &ReducedModel, traj: &Trajectory, steps: usize) -> Option<Vec<DVector<f64>>> {
    let nodes = refine_grid(&traj.times, steps);
    let fwd = rom.simulate(&traj.x0, &traj.input, &nodes).ok()?;
    Some((0..traj.len()).map(|l| rom.observe(&fwd.states()[l * steps])).collect())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("evaluate");
    if args.steps == 0 {
        return Err(invalid("steps must be positive".into()));
    }
    let model = load_model(&args.model)?;
    let trajectories = reference(&args, &model)?;
    let m = model.output_dim();
    if let Some(t) = trajectories.iter().find(|t| t.x0.len() != model.state_dim()) {
        return Err(troop::Error::DimensionMismatch(format!("trajectory '{}' does not match the model", t.label)).into());
    }

    let mut writer = csv::Writer::from_path(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let mut header = vec!["model".to_string(), "trajectory".into(), "t".into()];
    header.extend((0..m).map(|i| format!("y_true_{i}")));
    header.extend((0..m).map(|i| format!("y_pred_{i}")));
    header.push("normalized_error".into());
    writer.write_record(&header)?;

    let mut summaries = Vec::new();
    for path in &args.checkpoints {
        let ck = load_checkpoint(path)?;
        if ck.n != model.state_dim() {
            return Err(troop::Error::DimensionMismatch(format!(
                "checkpoint {} has n = {}, model has n = {}",
                path.display(),
                ck.n,
                model.state_dim()
            ))
            .into());
        }
        let label = label_of(path, ck.meta.label.as_deref());
        let pair = ck.to_pair()?;
        let rom = ReducedModel::new(&model, &pair, true)?;
        let mut errors = Vec::new();
        for traj in &trajectories {
            let energy = traj.energy();
            let predictions = predict(&rom, traj, args.steps);
            if predictions.is_none() {
                log::warn!("model '{label}' blows up on trajectory '{}'", traj.label);
            }
            for (l, y) in traj.observations.iter().enumerate() {
                let y_hat = predictions.as_ref().map(|p| p[l].clone()).unwrap_or_else(|| DVector::from_element(m, f64::NAN));
                let err = if predictions.is_some() { (&y_hat - y).norm_squared() / energy } else { f64::INFINITY };
                errors.push(err);
                let mut row = vec![label.clone(), traj.label.clone(), fmt(traj.times[l])];
                row.extend(y.iter().map(|v| fmt(*v)));
                row.extend(y_hat.iter().map(|v| fmt(*v)));
                row.push(fmt(err));
                writer.write_record(&row)?;
            }
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summaries.push(ModelSummary { label, mean_normalized_error: mean, max_normalized_error: max });
    }
    writer.flush()?;

    let summary_path = sibling(&args.out, ".summary.csv");
    let mut summary = csv::Writer::from_path(&summary_path).with_context(|| format!("writing {}", summary_path.display()))?;
    summary.write_record(["model", "mean_normalized_error", "max_normalized_error"])?;
    println!("{:<24} {:>22} {:>22}", "model", "mean normalized error", "max normalized error");
    for s in &summaries {
        summary.write_record([s.label.clone(), fmt(s.mean_normalized_error), fmt(s.max_normalized_error)])?;
        println!("{:<24} {:>22.6e} {:>22.6e}", s.label, s.mean_normalized_error, s.max_normalized_error);
    }
    summary.flush()?;

    let mut inputs: Vec<PathBuf> = args.checkpoints.clone();
    inputs.extend(args.data.iter().cloned());
    manifest.finish(&args, inputs, vec![args.out.clone(), summary_path], None, &args.out)
}
