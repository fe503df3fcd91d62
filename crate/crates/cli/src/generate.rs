//! `troop generate`: full-order impulse responses sampled on a uniform grid.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use troop::{impulse_state, sample_full_order, uniform_times, DynamicalSystem, InputSignal, TrajectoryDataset};

use crate::args::{invalid, load_model, parse_f64, write};
use crate::manifest::ManifestBuilder;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// `toy` or a model JSON file.
    #[arg(long, default_value = "toy")]
    pub model: String,
    /// Comma-separated impulse magnitudes, or `random:<count>:<lo>,<hi>`.
    #[arg(long)]
    pub amplitudes: String,
    /// Samples per trajectory, equally spaced on `[0, horizon]`.
    #[arg(long, default_value_t = 11)]
    pub samples: usize,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    /// Seed for random amplitude draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// RK4 steps between consecutive samples.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Explicit list or uniform random draws.
pub fn parse_amplitudes(spec: &str, seed: u64) -> Result<Vec<f64>> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let (count, range) = rest
            .split_once(':')
            .ok_or_else(|| invalid(format!("random amplitudes must look like random:N:lo,hi, got '{spec}'")))?;
        let count: usize = count.parse().map_err(|_| invalid(format!("bad amplitude count '{count}'")))?;
        let (lo, hi) = range
            .split_once(',')
            .ok_or_else(|| invalid(format!("random range must look like lo,hi, got '{range}'")))?;
        let (lo, hi) = (parse_f64(lo, "lower bound")?, parse_f64(hi, "upper bound")?);
        if !(lo < hi) || count == 0 {
            return Err(invalid(format!("need count > 0 and lo < hi, got {count}, [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok((0..count).map(|_| rng.random_range(lo..hi)).collect());
    }
    let values = spec.split(',').map(|s| parse_f64(s, "amplitude")).collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(invalid("no amplitudes given".into()));
    }
    Ok(values)
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("generate");
    if args.samples == 0 || !(args.horizon > 0.0) || args.steps == 0 {
        return Err(invalid("samples, steps and horizon must be positive".into()));
    }
    let model = load_model(&args.model)?;
    let amplitudes = parse_amplitudes(&args.amplitudes, args.seed)?;
    let times = uniform_times(args.samples, args.horizon);
    let trajectories = amplitudes
        .iter()
        .map(|&u0| {
            let x0 = impulse_state(&model, u0);
            sample_full_order(&model, format!("u0={u0}"), x0, InputSignal::Zero, &times, args.steps)
        })
        .collect::<troop::Result<Vec<_>>>()?;
    let data = TrajectoryDataset::new(model.state_dim(), model.output_dim(), trajectories)?;
    write(&args.out, &data.to_json())?;
    log::info!("wrote {} trajectories to {}", data.len(), args.out.display());
    manifest.finish(&args, Vec::new(), vec![args.out.clone()], Some(args.seed), &args.out)
}
