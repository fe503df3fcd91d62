//! Geometric conjugate gradient on the product of two Grassmann manifolds.
//!
//! Search directions are updated with the Riemannian Dai-Yuan coefficient
//! and step sizes come from a bisection search for the weak Wolfe
//! conditions. Each factor moves along its own geodesic (or retraction
//! curve) and the previous direction is carried along by the matching
//! transport.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::manifold::{ComponentPath, RepresentativePair, TangentLift, TransportMode};
use crate::objective::{GradientResult, Objective, ObjectiveConfig, PairObjective};
use crate::system::DynamicalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant, `c1 < c2 < 1`.
    pub c2: f64,
    /// Stop once the squared gradient norm is at most `eps`.
    pub eps: f64,
    pub max_iters: usize,
    pub max_line_search_bisections: usize,
    pub transport_mode: TransportMode,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            c1: 0.01,
            c2: 0.1,
            eps: 1e-8,
            max_iters: 500,
            max_line_search_bisections: 60,
            transport_mode: TransportMode::Exponential,
        }
    }
}

impl CgConfig {
    pub fn new(c1: f64, c2: f64, eps: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self { c1, c2, eps, max_iters, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be >= 0, got {}", self.eps)));
        }
        if self.max_line_search_bisections == 0 {
            return Err(Error::InvalidConfig("max_line_search_bisections must be positive".into()));
        }
        Ok(())
    }
}

/// One optimizer iteration; record 0 describes the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm_sq: f64,
    /// Accepted step, absent for the initial point.
    pub step_alpha: Option<f64>,
    /// Coefficient used to form the next direction.
    pub beta: Option<f64>,
    pub line_search_evals: usize,
    /// `J_k'(0)` of the line search that produced this iterate.
    pub initial_slope: Option<f64>,
    /// `J_k'(alpha)` at the accepted step.
    pub accepted_slope: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CgTrace {
    pub records: Vec<CgRecord>,
}

impl CgTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&CgRecord> {
        self.records.last()
    }

    /// One JSON object per line.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::InvalidData(format!("trace line: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub pair: RepresentativePair,
    pub trace: CgTrace,
    /// Objective and gradient at the returned pair.
    pub last: GradientResult,
    pub stop: StopReason,
}

impl CgOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Optimizer error together with everything computed before it.
#[derive(Debug, Clone, thiserror::Error)]
#[error("optimization stopped with {} recorded iterates", .trace.len())]
pub struct OptimizeFailure {
    #[source]
    pub error: Error,
    pub trace: CgTrace,
    /// Last accepted iterate, when there is one.
    pub pair: Option<RepresentativePair>,
}

/// Value and slope of the 1-D restriction at a trial step, plus whatever
/// the caller wants to keep from the evaluation.
#[derive(Debug, Clone)]
pub struct Probe<T> {
    pub value: f64,
    pub slope: f64,
    pub payload: T,
}

#[derive(Debug, Clone)]
pub struct LineSearchResult<T> {
    pub alpha: f64,
    pub probe: Probe<T>,
    pub evaluations: usize,
}

/// Weak Wolfe line search by expansion and bisection.
///
/// Starts at `alpha = 1`, doubles while no upper bracket is known and
/// bisects once one is. Non-finite values count as sufficient-decrease
/// failures. On failure returns the number of evaluations used.
pub fn wolfe_search<T, F>(
    mut eval: F,
    value0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    max_trials: usize,
) -> std::result::Result<LineSearchResult<T>, usize>
where
    F: FnMut(f64) -> Probe<T>,
{
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = 1.0;
    for evaluations in 1..=max_trials {
        let probe = eval(alpha);
        if !(probe.value <= value0 + c1 * alpha * slope0) {
            hi = alpha;
        } else if !(probe.slope >= c2 * slope0) {
            lo = alpha;
        } else {
            return Ok(LineSearchResult { alpha, probe, evaluations });
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * alpha };
    }
    Err(max_trials)
}

/// [`wolfe_search`] for a scalar function and its derivative.
pub fn wolfe_bisection<F, D>(mut phi: F, mut dphi: D, c1: f64, c2: f64, max_trials: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let (value0, slope0) = (phi(0.0), dphi(0.0));
    if !(slope0 < 0.0) {
        return Err(Error::InvalidConfig(format!("not a descent direction: slope {slope0}")));
    }
    wolfe_search(
        |a| {
            let value = phi(a);
            let slope = if value.is_finite() { dphi(a) } else { f64::NAN };
            Probe { value, slope, payload: () }
        },
        value0,
        slope0,
        c1,
        c2,
        max_trials,
    )
    .map(|r| r.alpha)
    .map_err(|evaluations| Error::LineSearchFailed { iteration: 0, evaluations })
}

/// Riemannian Dai-Yuan coefficient
/// `<g1, g1> / (<g1, T eta0> - <g0, eta0>)`, where `eta0` is the previous
/// search direction and `T eta0` its transport to the new point. `None`
/// when the denominator is not safely positive.
pub fn dai_yuan_beta(
    grad_next: &TangentLift,
    grad_prev: &TangentLift,
    dir_prev_transported: &TangentLift,
    dir_prev: &TangentLift,
) -> Option<f64> {
    let num = grad_next.dot(grad_next);
    let a = grad_next.dot(dir_prev_transported);
    let b = grad_prev.dot(dir_prev);
    let den = a - b;
    let scale = a.abs() + b.abs();
    if !den.is_finite() || !num.is_finite() || den <= 1e-14 * scale || den <= 0.0 {
        return None;
    }
    Some(num / den)
}

/// Trains a pair on `data` from `init`.
pub fn optimize(
    sys: &dyn DynamicalSystem,
    init: RepresentativePair,
    data: TrajectoryDataset,
    obj_cfg: &ObjectiveConfig,
    cg_cfg: &CgConfig,
) -> std::result::Result<CgOutcome, OptimizeFailure> {
    let objective = Objective::new(sys, data, *obj_cfg)
        .map_err(|error| OptimizeFailure { error, trace: CgTrace::default(), pair: None })?;
    optimize_objective(&objective, init, cg_cfg)
}

struct Accepted {
    pair: RepresentativePair,
    result: GradientResult,
    transported: TangentLift,
}

fn is_blow_up(e: &Error) -> bool {
    matches!(e, Error::BlowUp { .. } | Error::NonFiniteState { .. } | Error::SingularPairing { .. })
}

/// Point and transported direction at step `alpha`, with the sign of the
/// first `phi` column fixed so `det(psi^T phi) > 0`.
fn step_to(
    paths: &(ComponentPath, ComponentPath),
    dir: &TangentLift,
    alpha: f64,
) -> Result<(RepresentativePair, TangentLift)> {
    let (mut phi, tx) = paths.0.point_and_transport(alpha, &dir.x)?;
    let (psi, ty) = paths.1.point_and_transport(alpha, &dir.y)?;
    let mut transported = TangentLift::new(tx, ty);
    let det = (psi.cols().transpose() * phi.cols()).determinant();
    if det < 0.0 {
        phi.negate_first_column();
        transported.negate_first_x_column();
    }
    Ok((RepresentativePair::new(phi, psi)?, transported))
}

/// Conjugate gradient on any [`PairObjective`].
pub fn optimize_objective(
    objective: &dyn PairObjective,
    init: RepresentativePair,
    cfg: &CgConfig,
) -> std::result::Result<CgOutcome, OptimizeFailure> {
    let mut trace = CgTrace::default();
    if let Err(error) = cfg.validate() {
        return Err(OptimizeFailure { error, trace, pair: None });
    }
    let mut current = match objective.value_and_gradient(&init) {
        Ok(r) => r,
        Err(error) => return Err(OptimizeFailure { error, trace, pair: Some(init) }),
    };
    let mut pair = init;
    let mut grad_sq = current.grad.dot(&current.grad);
    let mut dir = current.grad.neg();
    trace.records.push(CgRecord {
        iteration: 0,
        objective: current.value,
        grad_norm_sq: grad_sq,
        step_alpha: None,
        beta: None,
        line_search_evals: 0,
        initial_slope: None,
        accepted_slope: None,
    });
    log::info!("cg iteration 0: J = {:.6e}, |grad|^2 = {:.3e}", current.value, grad_sq);

    for k in 1..=cfg.max_iters {
        if grad_sq <= cfg.eps {
            return Ok(CgOutcome { pair, trace, last: current, stop: StopReason::Converged });
        }
        let mut slope0 = current.grad.dot(&dir);
        if !(slope0 < 0.0) {
            dir = current.grad.neg();
            slope0 = -grad_sq;
        }
        let paths = (
            ComponentPath::new(cfg.transport_mode, pair.phi(), &dir.x),
            ComponentPath::new(cfg.transport_mode, pair.psi(), &dir.y),
        );
        let mut hard_error = None;
        let search = wolfe_search(
            |alpha| {
                let blocked = Probe { value: f64::INFINITY, slope: f64::NAN, payload: None };
                if hard_error.is_some() {
                    return blocked;
                }
                let (next, transported) = match step_to(&paths, &dir, alpha) {
                    Ok(v) => v,
                    Err(e) if is_blow_up(&e) || matches!(e, Error::RankDeficient { .. }) => return blocked,
                    Err(e) => {
                        hard_error = Some(e);
                        return blocked;
                    }
                };
                match objective.value_and_gradient(&next) {
                    Ok(result) => Probe {
                        value: result.value,
                        slope: result.grad.dot(&transported),
                        payload: Some(Accepted { pair: next, result, transported }),
                    },
                    Err(e) if is_blow_up(&e) => blocked,
                    Err(e) => {
                        hard_error = Some(e);
                        blocked
                    }
                }
            },
            current.value,
            slope0,
            cfg.c1,
            cfg.c2,
            cfg.max_line_search_bisections,
        );
        if let Some(error) = hard_error {
            return Err(OptimizeFailure { error, trace, pair: Some(pair) });
        }
        let found = match search {
            Ok(found) => found,
            Err(evaluations) => {
                let error = Error::LineSearchFailed { iteration: k, evaluations };
                return Err(OptimizeFailure { error, trace, pair: Some(pair) });
            }
        };
        let accepted = found.probe.payload.expect("accepted probes carry their point");
        let next_grad = &accepted.result.grad;
        let transported_dir = &accepted.transported;

        let beta = dai_yuan_beta(next_grad, &current.grad, transported_dir, &dir).unwrap_or(0.0);
        let mut next_dir = next_grad.neg();
        next_dir.axpy(beta, transported_dir);
        let beta = if next_grad.dot(&next_dir) < 0.0 {
            beta
        } else {
            next_dir = next_grad.neg();
            0.0
        };

        grad_sq = next_grad.dot(next_grad);
        trace.records.push(CgRecord {
            iteration: k,
            objective: accepted.result.value,
            grad_norm_sq: grad_sq,
            step_alpha: Some(found.alpha),
            beta: Some(beta),
            line_search_evals: found.evaluations,
            initial_slope: Some(slope0),
            accepted_slope: Some(found.probe.slope),
        });
        log::info!(
            "cg iteration {k}: J = {:.6e}, |grad|^2 = {:.3e}, alpha = {:.3e}, beta = {:.3e}, evals = {}",
            accepted.result.value,
            grad_sq,
            found.alpha,
            beta,
            found.evaluations
        );
        pair = accepted.pair;
        current = accepted.result;
        dir = next_dir;
    }
    let stop = if grad_sq <= cfg.eps { StopReason::Converged } else { StopReason::MaxIterations };
    Ok(CgOutcome { pair, trace, last: current, stop })
}
