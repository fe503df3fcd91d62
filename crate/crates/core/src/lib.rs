//! Trajectory-based optimization of oblique projections for nonlinear model
//! reduction.
//!
//! A reduced model is defined by a pair of `r`-dimensional subspaces
//! `(V, W)` of the state space: trajectories evolve in `V` and residuals are
//! made orthogonal to `W`. The pair is optimized on the product of two
//! Grassmann manifolds to fit observed output trajectories, with an adjoint
//! gradient and a Riemannian conjugate gradient method.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod integrate;
pub mod manifold;
pub mod objective;
pub mod optimizer;
pub mod projection;
pub mod system;

pub use baselines::{balanced_truncation, bt_init_for, pod, snapshots_from_dataset, BalancedRealization, SnapshotMatrix};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use dataset::{sample_full_order, uniform_times, SignalTrajectory, Trajectory, TrajectoryDataset};
pub use error::{Error, Result};
pub use integrate::{DenseTrajectory, QuadratureRule};
pub use manifold::{OrthoRep, RepresentativePair, TangentLift, TransportMode};
pub use objective::{
    evaluate, gradient_integrated, gradient_sampled, regularization, regularization_gradient, GradientResult, Loss,
    Objective, ObjectiveConfig, ObjectiveMode, PairObjective, Weighting,
};
pub use optimizer::{optimize, optimize_objective, CgConfig, CgOutcome, CgRecord, CgTrace, OptimizeFailure, StopReason};
pub use projection::{assemble_rom, ReducedModel};
pub use system::{
    impulse_state, linearize, toy_model, DynamicalSystem, InputSignal, LtiSystem, Model, ModelFile,
    QuadraticBilinearModel,
};
