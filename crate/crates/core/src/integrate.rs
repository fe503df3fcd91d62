//! Fixed-step RK4 integration with cubic Hermite dense output, backward
//! adjoint solves, and Gauss-Legendre quadrature.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Piecewise cubic Hermite interpolant through stored states and their
/// time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    derivs: Vec<DVector<f64>>,
}

impl DenseTrajectory {
    /// `times` must be strictly increasing and match the other two in length.
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>, derivs: Vec<DVector<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() || times.len() != derivs.len() {
            return Err(Error::InvalidData("dense trajectory needs matching non-empty grids".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidData("dense trajectory times must be strictly increasing".into()));
        }
        Ok(Self { times, states, derivs })
    }

    /// Hermite interpolant through samples, with slopes from second-order
    /// finite differences (one-sided at the ends).
    pub fn from_samples(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        let k = times.len();
        if k < 2 || values.len() != k {
            return Err(Error::InvalidData("need at least two samples to interpolate".into()));
        }
        let slope = |i: usize, j: usize| (&values[j] - &values[i]) / (times[j] - times[i]);
        let derivs = (0..k)
            .map(|i| {
                if k == 2 {
                    slope(0, 1)
                } else if i == 0 {
                    // three-point one-sided difference
                    let (h0, h1) = (times[1] - times[0], times[2] - times[1]);
                    slope(0, 1) * ((2.0 * h0 + h1) / (h0 + h1)) - slope(1, 2) * (h0 / (h0 + h1))
                } else if i == k - 1 {
                    let (h0, h1) = (times[k - 2] - times[k - 3], times[k - 1] - times[k - 2]);
                    slope(k - 2, k - 1) * ((2.0 * h1 + h0) / (h0 + h1)) - slope(k - 3, k - 2) * (h1 / (h0 + h1))
                } else {
                    let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
                    (slope(i - 1, i) * h1 + slope(i, i + 1) * h0) / (h0 + h1)
                }
            })
            .collect();
        Self::new(times, values, derivs)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn derivatives(&self) -> &[DVector<f64>] {
        &self.derivs
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Index of a stored node within `1e-12` relative tolerance of `t`.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + t.abs());
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// Interpolated state at `t`, clamped to the covered interval.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let k = self.times.len();
        if k == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[k - 1] {
            return self.states[k - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        if t == self.times[i] {
            return self.states[i].clone();
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.states[i] * h00
            + &self.derivs[i] * (h10 * h)
            + &self.states[i + 1] * h01
            + &self.derivs[i + 1] * (h11 * h)
    }

    /// Reverses node order; used to turn a backward sweep into an
    /// increasing-time trajectory.
    fn from_backward(mut times: Vec<f64>, mut states: Vec<DVector<f64>>, mut derivs: Vec<DVector<f64>>) -> Self {
        times.reverse();
        states.reverse();
        derivs.reverse();
        Self { times, states, derivs }
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { time: t })
    }
}

/// One classical RK4 step of signed size `h`; `k1` is `f(t, x)`.
fn rk4_step<F>(f: &mut F, t: f64, x: &DVector<f64>, k1: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = f(t + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Walks the node list `grid` (monotone in either direction) with RK4,
/// recording states and derivatives at every node.
fn march<F>(mut f: F, x0: DVector<f64>, grid: &[f64]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    check_finite(&x0, grid[0])?;
    let mut states = Vec::with_capacity(grid.len());
    let mut derivs = Vec::with_capacity(grid.len());
    let mut x = x0;
    let mut k1 = f(grid[0], &x);
    for w in grid.windows(2) {
        let next = rk4_step(&mut f, w[0], &x, &k1, w[1] - w[0]);
        check_finite(&next, w[1])?;
        states.push(x);
        derivs.push(k1);
        x = next;
        k1 = f(w[1], &x);
    }
    check_finite(&k1, *grid.last().unwrap())?;
    states.push(x);
    derivs.push(k1);
    Ok((states, derivs))
}

/// Step nodes from `t0` to `t1` with a fixed step, the last one shortened.
fn stepped_nodes(t0: f64, t1: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("integration step must be positive, got {step}")));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidConfig(format!("empty integration interval [{t0}, {t1}]")));
    }
    let mut nodes = vec![t0];
    let mut k = 1usize;
    loop {
        let t = t0 + k as f64 * step;
        if t >= t1 - 1e-12 * step.max(t1.abs()) {
            nodes.push(t1);
            break;
        }
        nodes.push(t);
        k += 1;
    }
    Ok(nodes)
}

/// Refines `grid` by splitting every interval into `steps` equal substeps.
pub fn refine_grid(grid: &[f64], steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    let mut out = Vec::with_capacity((grid.len().saturating_sub(1)) * steps + 1);
    if let Some(&first) = grid.first() {
        out.push(first);
    }
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / steps as f64;
        for s in 1..steps {
            out.push(w[0] + s as f64 * h);
        }
        out.push(w[1]);
    }
    out
}

/// Classical RK4 from `t0` to `t1` with fixed `step`.
pub fn integrate_forward<F>(rhs: F, x0: DVector<f64>, t0: f64, t1: f64, step: f64) -> Result<DenseTrajectory>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let nodes = stepped_nodes(t0, t1, step)?;
    let (states, derivs) = march(rhs, x0, &nodes)?;
    Ok(DenseTrajectory { times: nodes, states, derivs })
}

/// RK4 through the strictly increasing node list `nodes`, one step per
/// interval.
pub fn integrate_on_nodes<F>(rhs: F, x0: DVector<f64>, nodes: &[f64]) -> Result<DenseTrajectory>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.is_empty() {
        return Err(Error::InvalidData("integration nodes must be strictly increasing".into()));
    }
    let (states, derivs) = march(rhs, x0, nodes)?;
    Ok(DenseTrajectory { times: nodes.to_vec(), states, derivs })
}

/// Solves `-dλ/dt = G(t, λ)` backward from `λ(t_hi) = lambda_end` to
/// `t_lo` with fixed `step`; `lin_rhs_transpose` evaluates `G`.
pub fn integrate_adjoint_backward<G>(
    lin_rhs_transpose: G,
    lambda_end: DVector<f64>,
    t_hi: f64,
    t_lo: f64,
    step: f64,
) -> Result<DenseTrajectory>
where
    G: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(t_lo < t_hi) {
        return Err(Error::InvalidConfig(format!("adjoint interval [{t_lo}, {t_hi}] is empty")));
    }
    let mut nodes = stepped_nodes(t_lo, t_hi, step)?;
    nodes.reverse();
    backward_on_nodes(lin_rhs_transpose, lambda_end, nodes)
}

/// Backward adjoint solve over the increasing node list `nodes`, ending at
/// `nodes[0]`.
pub fn integrate_adjoint_on_nodes<G>(lin_rhs_transpose: G, lambda_end: DVector<f64>, nodes: &[f64]) -> Result<DenseTrajectory>
where
    G: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidData("adjoint nodes must be strictly increasing".into()));
    }
    let rev: Vec<f64> = nodes.iter().rev().copied().collect();
    backward_on_nodes(lin_rhs_transpose, lambda_end, rev)
}

fn backward_on_nodes<G>(mut g: G, lambda_end: DVector<f64>, rev_nodes: Vec<f64>) -> Result<DenseTrajectory>
where
    G: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    // dλ/dt = -G(t, λ), marched with negative steps
    let (states, derivs) = march(|t, l| -g(t, l), lambda_end, &rev_nodes)?;
    Ok(DenseTrajectory::from_backward(rev_nodes, states, derivs))
}

/// Gauss-Legendre rule with `q` nodes, exact for polynomials of degree
/// `2q - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub const MAX_ORDER: usize = 10;

    pub fn gauss_legendre(q: usize) -> Result<Self> {
        if q == 0 || q > Self::MAX_ORDER {
            return Err(Error::InvalidConfig(format!(
                "quadrature order must be in 1..={}, got {q}",
                Self::MAX_ORDER
            )));
        }
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        for i in 0..q {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            dp = if d != 0.0 { d } else { dp };
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        // ascending order
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Reference nodes on `[-1, 1]`.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn reference_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Single-interval quadrature of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(t, w)| w * f(t)).sum()
    }

    /// Composite rule: the single-interval rule on every interval of `grid`.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, mut f: F, grid: &[f64]) -> f64 {
        grid.windows(2).map(|w| self.integrate(&mut f, w[0], w[1])).sum()
    }
}

/// `(P_q(x), P_q'(x))` by the three-term recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `quad_integrate` in free-function form.
pub fn quad_integrate<F: FnMut(f64) -> f64>(rule: &QuadratureRule, f: F, t_lo: f64, t_hi: f64) -> f64 {
    rule.integrate(f, t_lo, t_hi)
}
