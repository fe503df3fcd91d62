//! `troop baseline`: POD or balanced-truncation checkpoints.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use troop::{
    bt_init_for, gradient_sampled, pod, snapshots_from_dataset, Checkpoint, CheckpointMeta, DynamicalSystem,
    ObjectiveConfig,
};

use crate::args::{invalid, load_dataset, load_model, write};
use crate::manifest::ManifestBuilder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Leading left singular vectors of full-order state snapshots.
    Pod,
    /// Balanced truncation of the linearization about the origin.
    Bt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// `toy` or a model JSON file.
    #[arg(long, default_value = "toy")]
    pub model: String,
    /// Dataset whose initial states seed the POD snapshots; also used to
    /// report the objective of the baseline.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub rank: usize,
    /// Regularization weight used when reporting the objective.
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    /// RK4 steps between consecutive samples.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: BaselineArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("baseline");
    let model = load_model(&args.model)?;
    let data = args.data.as_deref().map(load_dataset).transpose()?;
    let n = model.state_dim();
    if args.rank == 0 || args.rank > n {
        return Err(invalid(format!("rank must be in 1..={n}, got {}", args.rank)));
    }
    let pair = match args.method {
        Method::Bt => bt_init_for(&model, args.rank)?,
        Method::Pod => {
            let data = data.as_ref().ok_or_else(|| invalid("pod needs --data".into()))?;
            pod(&snapshots_from_dataset(&model, data, args.steps)?, args.rank)?
        }
    };

    let mut meta = CheckpointMeta {
        gamma: args.gamma,
        label: Some(args.label.clone().unwrap_or_else(|| format!("{:?}", args.method).to_lowercase())),
        ..CheckpointMeta::default()
    };
    if let Some(data) = &data {
        let cfg = ObjectiveConfig { gamma: args.gamma, steps_per_interval: args.steps, ..ObjectiveConfig::default() };
        match gradient_sampled(&model, &pair, data, &cfg) {
            Ok(res) => {
                meta.final_cost = Some(res.value);
                meta.final_grad_norm = Some(res.grad.dot(&res.grad).sqrt());
            }
            Err(e) => log::warn!("baseline objective not reported: {e}"),
        }
    }
    write(&args.out, &Checkpoint::from_pair(&pair, meta).to_json())?;
    let inputs = args.data.iter().cloned().collect();
    manifest.finish(&args, inputs, vec![args.out.clone()], None, &args.out)
}
