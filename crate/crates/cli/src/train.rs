//! `troop train`: conjugate-gradient optimization of a subspace pair.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use troop::{
    bt_init_for, optimize, pod, snapshots_from_dataset, CgConfig, CgTrace, Checkpoint, CheckpointMeta,
    DynamicalSystem, ObjectiveConfig, RepresentativePair, TrajectoryDataset,
};

use crate::args::{invalid, load_checkpoint, load_dataset, load_model, sibling, write, ModeArg, TransportArg, WeightingArg};
use crate::manifest::ManifestBuilder;

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `toy` or a model JSON file.
    #[arg(long, default_value = "toy")]
    pub model: String,
    #[arg(long)]
    pub rank: usize,
    /// Regularization weight.
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    /// `bt`, `pod` or `file:<checkpoint>`.
    #[arg(long, default_value = "bt")]
    pub init: String,
    #[arg(long, default_value_t = 0.01)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub c2: f64,
    /// Stop when the squared gradient norm drops to this level.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value = "sampled")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "exponential")]
    pub transport: TransportArg,
    #[arg(long, value_enum, default_value = "mean")]
    pub weighting: WeightingArg,
    /// Gauss-Legendre points per integration step.
    #[arg(long, default_value_t = 2)]
    pub quadrature: usize,
    /// RK4 steps between consecutive samples.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Label stored in the checkpoint.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Trace file (JSON lines); defaults to `<out>.trace.jsonl`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn initial_pair(
    spec: &str,
    sys: &dyn DynamicalSystem,
    data: &TrajectoryDataset,
    rank: usize,
    steps: usize,
) -> Result<RepresentativePair> {
    match spec {
        "bt" => Ok(bt_init_for(sys, rank)?),
        "pod" => Ok(pod(&snapshots_from_dataset(sys, data, steps)?, rank)?),
        other => {
            let path = other
                .strip_prefix("file:")
                .ok_or_else(|| invalid(format!("init must be bt, pod or file:<path>, got '{other}'")))?;
            let ck = load_checkpoint(Path::new(path))?;
            if ck.n != sys.state_dim() || ck.r != rank {
                return Err(invalid(format!(
                    "checkpoint {path} is {}x{}, expected {}x{rank}",
                    ck.n,
                    ck.r,
                    sys.state_dim()
                )));
            }
            Ok(ck.to_pair()?)
        }
    }
}

fn write_trace(path: &Path, trace: &CgTrace) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    trace.write_json_lines(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: TrainArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("train");
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let n = model.state_dim();
    if args.rank == 0 || args.rank >= n {
        return Err(invalid(format!("rank must be in 1..{n}, got {}", args.rank)));
    }
    let obj_cfg = ObjectiveConfig {
        gamma: args.gamma,
        weighting: args.weighting.into(),
        mode: args.mode.into(),
        quadrature_order: args.quadrature,
        steps_per_interval: args.steps,
        ..ObjectiveConfig::default()
    };
    obj_cfg.validate()?;
    let cg_cfg = CgConfig {
        c1: args.c1,
        c2: args.c2,
        eps: args.tol,
        max_iters: args.max_iters,
        transport_mode: args.transport.into(),
        ..CgConfig::default()
    };
    cg_cfg.validate()?;

    let init = initial_pair(&args.init, &model, &data, args.rank, args.steps)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.out, ".trace.jsonl"));
    let outcome = match optimize(&model, init, data, &obj_cfg, &cg_cfg) {
        Ok(o) => o,
        Err(failure) => {
            write_trace(&trace_path, &failure.trace)?;
            log::warn!("partial trace ({} records) written to {}", failure.trace.len(), trace_path.display());
            return Err(anyhow::Error::new(failure).context("training failed"));
        }
    };
    write_trace(&trace_path, &outcome.trace)?;
    let last = outcome.trace.last().expect("trace has an initial record");
    let meta = CheckpointMeta {
        gamma: args.gamma,
        iterations: outcome.iterations(),
        final_cost: Some(last.objective),
        final_grad_norm: Some(last.grad_norm_sq.sqrt()),
        label: args.label.clone(),
    };
    write(&args.out, &Checkpoint::from_pair(&outcome.pair, meta).to_json())?;
    log::info!(
        "{:?} after {} iterations: J = {:.6e}, |grad| = {:.3e}",
        outcome.stop,
        outcome.iterations(),
        last.objective,
        last.grad_norm_sq.sqrt()
    );
    let inputs = vec![args.data.clone()];
    let outputs = vec![args.out.clone(), trace_path];
    manifest.finish(&args, inputs, outputs, None, &args.out)
}
