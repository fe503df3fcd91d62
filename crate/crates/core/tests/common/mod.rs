//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use troop::manifold::Geodesic;
use troop::{
    impulse_state, sample_full_order, toy_model, uniform_times, InputSignal, LtiSystem, RepresentativePair,
    TangentLift, Trajectory, TrajectoryDataset,
};

pub const SAMPLES: usize = 11;
pub const HORIZON: f64 = 10.0;
pub const STEPS: usize = 50;

/// Impulse responses of the toy model sampled at `SAMPLES` points on `[0, HORIZON]`.
pub fn toy_dataset(amplitudes: &[f64]) -> TrajectoryDataset {
    let sys = toy_model();
    let times = uniform_times(SAMPLES, HORIZON);
    let trajs: Vec<Trajectory> = amplitudes
        .iter()
        .map(|&u0| {
            sample_full_order(&sys, format!("u0={u0}"), impulse_state(&sys, u0), InputSignal::Zero, &times, STEPS)
                .unwrap()
        })
        .collect();
    TrajectoryDataset::new(3, 1, trajs).unwrap()
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

/// A small perturbation of `span{e1, e3}` in R^3, where the toy reduced
/// model stays bounded over the horizon.
pub fn toy_pair(rng: &mut ChaCha8Rng) -> RepresentativePair {
    let base = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let phi = base + uniform_matrix(rng, 3, 2) * 0.1;
    let psi = &phi + uniform_matrix(rng, 3, 2) * 0.1;
    RepresentativePair::from_bases(&phi, &psi).unwrap()
}

/// A generic pair with a well-conditioned pairing.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize, r: usize) -> RepresentativePair {
    loop {
        let phi = uniform_matrix(rng, n, r);
        let psi = &phi + uniform_matrix(rng, n, r) * 0.5;
        if let Ok(pair) = RepresentativePair::from_bases(&phi, &psi) {
            if pair.pairing_det().abs() > 1e-2 {
                return pair;
            }
        }
    }
}

pub fn random_direction(rng: &mut ChaCha8Rng, pair: &RepresentativePair) -> TangentLift {
    let (n, r) = (pair.n(), pair.rank());
    TangentLift::new(uniform_matrix(rng, n, r), uniform_matrix(rng, n, r)).horizontal(pair)
}

/// The point `exp(t dir)` on the product of Grassmannians.
pub fn along(pair: &RepresentativePair, dir: &TangentLift, t: f64) -> RepresentativePair {
    let p = Geodesic::new(pair.phi(), &dir.x).point(t);
    let q = Geodesic::new(pair.psi(), &dir.y).point(t);
    RepresentativePair::new(p, q).unwrap()
}

/// A random stable system with spectral abscissa `-margin`.
pub fn random_stable_lti(rng: &mut ChaCha8Rng, n: usize, inputs: usize, outputs: usize, margin: f64) -> LtiSystem {
    let g = uniform_matrix(rng, n, n) / (n as f64).sqrt();
    let abscissa = g.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let a = g - DMatrix::identity(n, n) * (abscissa + margin);
    LtiSystem::new(a, uniform_matrix(rng, n, inputs), uniform_matrix(rng, outputs, n)).unwrap()
}
