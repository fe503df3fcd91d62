//! Fixtures for the benchmarks: the toy training set and a trained-size
//! subspace pair.

use nalgebra::DMatrix;
use troop::{
    impulse_state, sample_full_order, toy_model, uniform_times, InputSignal, RepresentativePair, SignalTrajectory,
    TrajectoryDataset,
};

/// Impulse responses at `amplitudes`, 11 samples on `[0, 10]`.
pub fn toy_dataset(amplitudes: &[f64]) -> TrajectoryDataset {
    let sys = toy_model();
    let times = uniform_times(11, 10.0);
    let trajs = amplitudes
        .iter()
        .map(|&u0| sample_full_order(&sys, format!("u0={u0}"), impulse_state(&sys, u0), InputSignal::Zero, &times, 50))
        .collect::<troop::Result<Vec<_>>>()
        .expect("toy responses are finite");
    TrajectoryDataset::new(3, 1, trajs).expect("consistent dataset")
}

/// Continuous output signals for the integrated objective.
pub fn toy_signals(amplitudes: &[f64]) -> Vec<SignalTrajectory> {
    let sys = toy_model();
    let grid = uniform_times(11, 10.0);
    amplitudes
        .iter()
        .map(|&u0| SignalTrajectory::from_full_order(&sys, format!("u0={u0}"), impulse_state(&sys, u0), InputSignal::Zero, &grid, 50))
        .collect::<troop::Result<Vec<_>>>()
        .expect("toy responses are finite")
}

/// A pair near `span{e1, e3}` on which the toy reduced model stays bounded.
pub fn toy_pair() -> RepresentativePair {
    let phi = DMatrix::from_column_slice(3, 2, &[1.0, 0.05, 0.02, -0.03, 0.08, 1.0]);
    let psi = DMatrix::from_column_slice(3, 2, &[1.0, -0.04, 0.06, 0.05, -0.02, 1.0]);
    RepresentativePair::from_bases(&phi, &psi).expect("well-conditioned pairing")
}
