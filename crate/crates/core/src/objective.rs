//! Regularized trajectory-misfit objective and its adjoint gradient.
//!
//! The sampled objective is
//!
//! ```text
//! J = sum_m w_m sum_l L(y^_{m,l} - y_{m,l}) + gamma rho
//! ```
//!
//! with `w_m = 1/(M L E_m)` by default. The integrated objective replaces
//! the inner sum by an integral over `[t0, tf]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SignalTrajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::integrate::{integrate_adjoint_on_nodes, refine_grid, DenseTrajectory, QuadratureRule};
use crate::manifold::{horizontal_project, RepresentativePair, TangentLift};
use crate::projection::ReducedModel;
use crate::system::{DynamicalSystem, InputSignal};

/// Per-sample penalty `L_y` on the output residual.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `|r|^2`.
    #[default]
    SquaredNorm,
    /// `delta^2 (sqrt(1 + |r|^2 / delta^2) - 1)`.
    PseudoHuber { delta: f64 },
}

impl Loss {
    pub fn value(&self, r: &DVector<f64>) -> f64 {
        match *self {
            Loss::SquaredNorm => r.norm_squared(),
            Loss::PseudoHuber { delta } => {
                delta * delta * ((1.0 + r.norm_squared() / (delta * delta)).sqrt() - 1.0)
            }
        }
    }

    pub fn gradient(&self, r: &DVector<f64>) -> DVector<f64> {
        match *self {
            Loss::SquaredNorm => r * 2.0,
            Loss::PseudoHuber { delta } => r / (1.0 + r.norm_squared() / (delta * delta)).sqrt(),
        }
    }
}

/// How trajectory costs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Average over trajectories (factor `1/M`).
    #[default]
    Mean,
    /// Plain sum over trajectories.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// Misfit at the sample times.
    #[default]
    Sampled,
    /// Misfit integrated over the whole time window.
    Integrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub loss: Loss,
    /// Divide each trajectory's misfit by its summed output energy
    /// (`L E_m` samples, or `int |y|^2 dt`).
    pub normalize_by_energy: bool,
    pub weighting: Weighting,
    pub mode: ObjectiveMode,
    /// Gauss-Legendre points per integration step.
    pub quadrature_order: usize,
    /// RK4 steps between consecutive sample times.
    pub steps_per_interval: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            loss: Loss::SquaredNorm,
            normalize_by_energy: true,
            weighting: Weighting::Mean,
            mode: ObjectiveMode::Sampled,
            quadrature_order: 2,
            steps_per_interval: 50,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.steps_per_interval == 0 {
            return Err(Error::InvalidConfig("steps_per_interval must be positive".into()));
        }
        if let Loss::PseudoHuber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(Error::InvalidConfig(format!("pseudo-Huber delta must be > 0, got {delta}")));
            }
        }
        QuadratureRule::gauss_legendre(self.quadrature_order).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub value: f64,
    /// Horizontal lift of the Riemannian gradient.
    pub grad: TangentLift,
    /// Weighted misfit of each trajectory, regularization excluded.
    pub per_trajectory_costs: Vec<f64>,
}

/// `rho = -log[det(Psi^T Phi)^2 / (det(Phi^T Phi) det(Psi^T Psi))]`.
pub fn regularization(pair: &RepresentativePair) -> Result<f64> {
    let phi = pair.phi().cols();
    let psi = pair.psi().cols();
    let cross = log_abs_det(&(psi.transpose() * phi)).ok_or(Error::SingularPairing { det: 0.0 })?;
    let gram_phi = log_abs_det(&phi.tr_mul(phi)).ok_or(Error::SingularPairing { det: 0.0 })?;
    let gram_psi = log_abs_det(&psi.tr_mul(psi)).ok_or(Error::SingularPairing { det: 0.0 })?;
    // clamp round-off below zero at V = W
    Ok((gram_phi + gram_psi - 2.0 * cross).max(0.0))
}

/// `log|det m|` from the LU factors, `None` when singular.
fn log_abs_det(m: &DMatrix<f64>) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// `2 (Phi - Psi A^T, Psi - Phi A)` with `A = (Psi^T Phi)^{-1}`.
pub fn regularization_gradient(pair: &RepresentativePair) -> Result<TangentLift> {
    let a = pair.pairing_inverse()?;
    let phi = pair.phi().cols();
    let psi = pair.psi().cols();
    let x = (phi - psi * a.transpose()) * 2.0;
    let y = (psi - phi * &a) * 2.0;
    Ok(TangentLift::new(horizontal_project(pair.phi(), &x), horizontal_project(pair.psi(), &y)))
}

/// Objective over a fixed dataset, as seen by the optimizer.
pub trait PairObjective: Sync {
    /// Objective value, `+inf` when the reduced model blows up.
    fn value(&self, pair: &RepresentativePair) -> Result<f64>;

    fn value_and_gradient(&self, pair: &RepresentativePair) -> Result<GradientResult>;
}

/// Training data in the form the configured mode needs.
#[derive(Debug, Clone)]
pub enum TrainingData {
    Sampled(TrajectoryDataset),
    Integrated(Vec<SignalTrajectory>),
}

/// A full-order model, its data and an objective configuration.
pub struct Objective<'a> {
    sys: &'a dyn DynamicalSystem,
    data: TrainingData,
    cfg: ObjectiveConfig,
}

impl<'a> Objective<'a> {
    /// Builds the objective; in integrated mode the samples are
    /// interpolated into continuous signals.
    pub fn new(sys: &'a dyn DynamicalSystem, dataset: TrajectoryDataset, cfg: ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        check_dataset(sys, &dataset)?;
        let data = match cfg.mode {
            ObjectiveMode::Sampled => TrainingData::Sampled(dataset),
            ObjectiveMode::Integrated => TrainingData::Integrated(
                dataset.trajectories().iter().map(SignalTrajectory::from_samples).collect::<Result<_>>()?,
            ),
        };
        Ok(Self { sys, data, cfg })
    }

    pub fn with_signals(sys: &'a dyn DynamicalSystem, signals: Vec<SignalTrajectory>, cfg: ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { sys, data: TrainingData::Integrated(signals), cfg })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn data(&self) -> &TrainingData {
        &self.data
    }
}

impl PairObjective for Objective<'_> {
    fn value(&self, pair: &RepresentativePair) -> Result<f64> {
        match &self.data {
            TrainingData::Sampled(ds) => evaluate(self.sys, pair, ds, &self.cfg),
            TrainingData::Integrated(sig) => evaluate_integrated(self.sys, pair, sig, &self.cfg),
        }
    }

    fn value_and_gradient(&self, pair: &RepresentativePair) -> Result<GradientResult> {
        match &self.data {
            TrainingData::Sampled(ds) => gradient_sampled(self.sys, pair, ds, &self.cfg),
            TrainingData::Integrated(sig) => gradient_integrated(self.sys, pair, sig, &self.cfg),
        }
    }
}

fn check_dataset(sys: &dyn DynamicalSystem, data: &TrajectoryDataset) -> Result<()> {
    if data.state_dim() != sys.state_dim() || data.output_dim() != sys.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has n = {}, m = {}; model has n = {}, m = {}",
            data.state_dim(),
            data.output_dim(),
            sys.state_dim(),
            sys.output_dim()
        )));
    }
    Ok(())
}

fn check_pair(sys: &dyn DynamicalSystem, pair: &RepresentativePair) -> Result<()> {
    if pair.n() != sys.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "pair has n = {}, model has n = {}",
            pair.n(),
            sys.state_dim()
        )));
    }
    Ok(())
}

fn trajectory_factor(cfg: &ObjectiveConfig, count: usize) -> f64 {
    match cfg.weighting {
        Weighting::Mean => 1.0 / count as f64,
        Weighting::Sum => 1.0,
    }
}

/// Energy normalizer, rejecting trajectories with no output energy.
fn energy_weight(cfg: &ObjectiveConfig, label: &str, total_energy: f64) -> Result<f64> {
    if !cfg.normalize_by_energy {
        return Ok(1.0);
    }
    if !(total_energy > 0.0) {
        return Err(Error::InvalidData(format!(
            "trajectory '{label}' has zero output energy and cannot be energy-normalized"
        )));
    }
    Ok(1.0 / total_energy)
}

/// Weight applied to each sample residual of trajectory `m`.
pub fn sample_weights(data: &TrajectoryDataset, cfg: &ObjectiveConfig) -> Result<Vec<f64>> {
    let outer = trajectory_factor(cfg, data.len());
    data.trajectories()
        .iter()
        .map(|t| Ok(outer * energy_weight(cfg, &t.label, t.len() as f64 * t.energy())?))
        .collect()
}

/// Weight applied to the integrated misfit of each signal.
pub fn signal_weights(signals: &[SignalTrajectory], cfg: &ObjectiveConfig) -> Result<Vec<f64>> {
    let rule = QuadratureRule::gauss_legendre(cfg.quadrature_order)?;
    let outer = trajectory_factor(cfg, signals.len());
    signals
        .iter()
        .map(|s| {
            let grid = refine_grid(&s.grid, cfg.steps_per_interval);
            let energy = rule.integrate_composite(|t| s.signal.eval(t).norm_squared(), &grid);
            Ok(outer * energy_weight(cfg, &s.label, energy)?)
        })
        .collect()
}

/// Objective value on sampled data; `+inf` if any reduced trajectory
/// blows up or the pairing is singular.
pub fn evaluate(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    data: &TrajectoryDataset,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    sampled(sys, pair, data, cfg, false).map(|r| r.value).or_else(sentinel)
}

/// Objective value on continuous signals; `+inf` on blow-up.
pub fn evaluate_integrated(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    signals: &[SignalTrajectory],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    integrated(sys, pair, signals, cfg, false).map(|r| r.value).or_else(sentinel)
}

fn sentinel(e: Error) -> Result<f64> {
    match e {
        Error::BlowUp { .. } | Error::NonFiniteState { .. } | Error::SingularPairing { .. } => Ok(f64::INFINITY),
        other => Err(other),
    }
}

/// Objective value and adjoint gradient on sampled data.
pub fn gradient_sampled(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    data: &TrajectoryDataset,
    cfg: &ObjectiveConfig,
) -> Result<GradientResult> {
    sampled(sys, pair, data, cfg, true)
}

/// Objective value and adjoint gradient on continuous signals.
pub fn gradient_integrated(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    signals: &[SignalTrajectory],
    cfg: &ObjectiveConfig,
) -> Result<GradientResult> {
    integrated(sys, pair, signals, cfg, true)
}

fn sampled(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    data: &TrajectoryDataset,
    cfg: &ObjectiveConfig,
    want_grad: bool,
) -> Result<GradientResult> {
    cfg.validate()?;
    check_pair(sys, pair)?;
    check_dataset(sys, data)?;
    let weights = sample_weights(data, cfg)?;
    let kernel = AdjointKernel::new(sys, pair, cfg)?;
    let parts: Vec<Result<Contribution>> = data
        .trajectories()
        .par_iter()
        .zip(weights.par_iter())
        .enumerate()
        .map(|(i, (traj, &w))| {
            kernel
                .sampled_trajectory(&traj.x0, &traj.input, &traj.times, &traj.observations, w, want_grad)
                .map_err(|e| as_blow_up(e, i))
        })
        .collect();
    kernel.finish(pair, parts, cfg.gamma, want_grad)
}

fn integrated(
    sys: &dyn DynamicalSystem,
    pair: &RepresentativePair,
    signals: &[SignalTrajectory],
    cfg: &ObjectiveConfig,
    want_grad: bool,
) -> Result<GradientResult> {
    cfg.validate()?;
    check_pair(sys, pair)?;
    if signals.is_empty() {
        return Err(Error::InvalidData("no signals".into()));
    }
    for s in signals {
        if s.x0.len() != sys.state_dim() || s.signal.dim() != sys.output_dim() {
            return Err(Error::DimensionMismatch(format!("signal '{}' does not match the model", s.label)));
        }
    }
    let weights = signal_weights(signals, cfg)?;
    let kernel = AdjointKernel::new(sys, pair, cfg)?;
    let parts: Vec<Result<Contribution>> = signals
        .par_iter()
        .zip(weights.par_iter())
        .enumerate()
        .map(|(i, (sig, &w))| kernel.integrated_trajectory(sig, w, want_grad).map_err(|e| as_blow_up(e, i)))
        .collect();
    kernel.finish(pair, parts, cfg.gamma, want_grad)
}

fn as_blow_up(e: Error, trajectory: usize) -> Error {
    match e {
        Error::NonFiniteState { time } => Error::BlowUp { trajectory, time },
        Error::BlowUp { time, .. } => Error::BlowUp { trajectory, time },
        other => other,
    }
}

struct Contribution {
    cost: f64,
    grad: Option<TangentLift>,
}

/// Reduced model plus the fixed matrices the adjoint operators need.
struct AdjointKernel<'a> {
    rom: ReducedModel<'a>,
    sys: &'a dyn DynamicalSystem,
    /// `Psi A^T`.
    dual: DMatrix<f64>,
    loss: Loss,
    rule: QuadratureRule,
    steps: usize,
}

impl<'a> AdjointKernel<'a> {
    fn new(sys: &'a dyn DynamicalSystem, pair: &RepresentativePair, cfg: &ObjectiveConfig) -> Result<Self> {
        let rom = ReducedModel::new(sys, pair, true)?;
        let dual = rom.left_inverse().transpose();
        Ok(Self {
            rom,
            sys,
            dual,
            loss: cfg.loss,
            rule: QuadratureRule::gauss_legendre(cfg.quadrature_order)?,
            steps: cfg.steps_per_interval,
        })
    }

    fn phi(&self) -> &DMatrix<f64> {
        self.rom.pair().phi().cols()
    }

    fn input(&self, signal: &InputSignal, t: f64) -> DVector<f64> {
        signal.eval(t, self.sys.input_dim())
    }

    /// Accumulates `weight * S(t)^* v` at reduced state `z`.
    fn add_state_term(&self, acc: &mut TangentLift, z: &DVector<f64>, u: &DVector<f64>, t: f64, v: &DVector<f64>, weight: f64) {
        let x = self.rom.lift(z);
        let fx = self.sys.rhs(&x, u, t);
        let ft = self.rom.left_inverse() * &fx;
        let w = &self.dual * v;
        let jw = self.sys.jtvp(&x, u, t, &w);
        acc.x.ger(weight, &jw, z, 1.0);
        acc.x.ger(-weight, &w, &ft, 1.0);
        let resid = fx - self.phi() * ft;
        let av = self.rom.pairing_inverse().tr_mul(v);
        acc.y.ger(weight, &resid, &av, 1.0);
    }

    /// Accumulates `weight * T(t)^* g`.
    fn add_output_term(&self, acc: &mut TangentLift, z: &DVector<f64>, g: &DVector<f64>, weight: f64) {
        let h = self.sys.observe_jtvp(&self.rom.lift(z), g);
        acc.x.ger(weight, &h, z, 1.0);
    }

    /// Accumulates the initial-condition term `(dz0/dtheta)^* lambda`.
    fn add_initial_term(&self, acc: &mut TangentLift, x0: &DVector<f64>, z0: &DVector<f64>, lambda: &DVector<f64>) {
        let w = &self.dual * lambda;
        acc.x.ger(-1.0, &w, z0, 1.0);
        let resid = x0 - self.rom.lift(z0);
        let al = self.rom.pairing_inverse().tr_mul(lambda);
        acc.y.ger(1.0, &resid, &al, 1.0);
    }

    /// Backward adjoint solve over `nodes` with the reduced Jacobian at the
    /// interpolated forward state, plus an optional forcing `H^* g(t)`.
    fn adjoint<F>(&self, fwd: &DenseTrajectory, input: &InputSignal, end: DVector<f64>, nodes: &[f64], forcing: F) -> Result<DenseTrajectory>
    where
        F: Fn(f64, &DVector<f64>) -> Option<DVector<f64>>,
    {
        integrate_adjoint_on_nodes(
            |t, lam| {
                let z = fwd.eval(t);
                let mut out = self.rom.jtvp(&z, &self.input(input, t), t, lam);
                if let Some(f) = forcing(t, &z) {
                    out += f;
                }
                out
            },
            end,
            nodes,
        )
    }

    fn sampled_trajectory(
        &self,
        x0: &DVector<f64>,
        input: &InputSignal,
        times: &[f64],
        observations: &[DVector<f64>],
        weight: f64,
        want_grad: bool,
    ) -> Result<Contribution> {
        let stride = self.steps;
        let nodes = refine_grid(times, stride);
        let fwd = self.rom.simulate(x0, input, &nodes)?;
        let states = fwd.states();
        let residuals: Vec<DVector<f64>> = observations
            .iter()
            .enumerate()
            .map(|(l, y)| self.rom.observe(&states[l * stride]) - y)
            .collect();
        let cost = weight * residuals.iter().map(|r| self.loss.value(r)).sum::<f64>();
        if !cost.is_finite() {
            return Err(Error::NonFiniteState { time: *times.last().unwrap() });
        }
        if !want_grad {
            return Ok(Contribution { cost, grad: None });
        }

        let (n, r) = (self.rom.pair().n(), self.rom.rank());
        let mut acc = TangentLift::zeros(n, r);
        let last = times.len() - 1;
        let g_at = |l: usize| self.loss.gradient(&residuals[l]) * weight;

        let z_last = &states[last * stride];
        let g_last = g_at(last);
        let mut lambda = self.rom.observe_jtvp(z_last, &g_last);
        self.add_output_term(&mut acc, z_last, &g_last, 1.0);

        for l in (0..last).rev() {
            let seg = &nodes[l * stride..=(l + 1) * stride];
            let adj = self.adjoint(&fwd, input, lambda, seg, |_, _| None)?;
            for w in seg.windows(2) {
                for (tau, wq) in self.rule.mapped(w[0], w[1]) {
                    let z = fwd.eval(tau);
                    let u = self.input(input, tau);
                    self.add_state_term(&mut acc, &z, &u, tau, &adj.eval(tau), wq);
                }
            }
            let z_l = &states[l * stride];
            let g_l = g_at(l);
            lambda = adj.states()[0].clone() + self.rom.observe_jtvp(z_l, &g_l);
            self.add_output_term(&mut acc, z_l, &g_l, 1.0);
        }
        self.add_initial_term(&mut acc, x0, &states[0], &lambda);
        Ok(Contribution { cost, grad: Some(acc) })
    }

    fn integrated_trajectory(&self, sig: &SignalTrajectory, weight: f64, want_grad: bool) -> Result<Contribution> {
        let nodes = refine_grid(&sig.grid, self.steps);
        let fwd = self.rom.simulate(&sig.x0, &sig.input, &nodes)?;
        let residual = |t: f64, z: &DVector<f64>| self.rom.observe(z) - sig.signal.eval(t);
        let cost = weight
            * self
                .rule
                .integrate_composite(|t| self.loss.value(&residual(t, &fwd.eval(t))), &nodes);
        if !cost.is_finite() {
            return Err(Error::NonFiniteState { time: sig.end() });
        }
        if !want_grad || nodes.len() < 2 {
            let grad = want_grad.then(|| TangentLift::zeros(sig.x0.len(), self.rom.rank()));
            return Ok(Contribution { cost, grad });
        }

        let g_at = |t: f64, z: &DVector<f64>| self.loss.gradient(&residual(t, z)) * weight;
        let (n, r) = (self.rom.pair().n(), self.rom.rank());
        let mut acc = TangentLift::zeros(n, r);
        let end = DVector::zeros(r);
        let adj = self.adjoint(&fwd, &sig.input, end, &nodes, |t, z| Some(self.rom.observe_jtvp(z, &g_at(t, z))))?;
        for w in nodes.windows(2) {
            for (tau, wq) in self.rule.mapped(w[0], w[1]) {
                let z = fwd.eval(tau);
                let u = self.input(&sig.input, tau);
                self.add_state_term(&mut acc, &z, &u, tau, &adj.eval(tau), wq);
                self.add_output_term(&mut acc, &z, &g_at(tau, &z), wq);
            }
        }
        self.add_initial_term(&mut acc, &sig.x0, &fwd.states()[0], &adj.states()[0]);
        Ok(Contribution { cost, grad: Some(acc) })
    }

    /// Ordered reduction of per-trajectory contributions.
    fn finish(&self, pair: &RepresentativePair, parts: Vec<Result<Contribution>>, gamma: f64, want_grad: bool) -> Result<GradientResult> {
        let (n, r) = (pair.n(), pair.rank());
        let mut grad = TangentLift::zeros(n, r);
        let mut costs = Vec::with_capacity(parts.len());
        for part in parts {
            let part = part?;
            costs.push(part.cost);
            if let Some(g) = part.grad {
                grad.axpy(1.0, &g);
            }
        }
        let mut value: f64 = costs.iter().sum();
        if gamma > 0.0 {
            value += gamma * regularization(pair)?;
            if want_grad {
                grad.axpy(gamma, &regularization_gradient(pair)?);
            }
        }
        Ok(GradientResult { value, grad: grad.horizontal(pair), per_trajectory_costs: costs })
    }
}
