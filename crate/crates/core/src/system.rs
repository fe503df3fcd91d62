//! Full-order models `dx/dt = f(x, u, t)`, `y = g(x)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_on_nodes, DenseTrajectory};

/// A full-order dynamical system with first-order derivative actions.
///
/// Implementations are immutable once built and are evaluated from several
/// threads at once.
pub trait DynamicalSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;

    /// `(df/dx)(x, u, t) v`.
    fn jvp(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64, v: &DVector<f64>) -> DVector<f64>;

    /// `(df/dx)(x, u, t)^T w`.
    fn jtvp(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64, w: &DVector<f64>) -> DVector<f64>;

    fn observe(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `(dg/dx)(x)^T w`.
    fn observe_jtvp(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    /// `df/du`; inputs enter affinely in every supported model.
    fn input_matrix(&self) -> DMatrix<f64>;

    /// Access to the quadratic-bilinear structure, when present, so reduced
    /// operators can be precomputed.
    fn as_quadratic(&self) -> Option<&QuadraticBilinearModel> {
        None
    }
}

/// Known input signal `u(t)`, applied identically to every input channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSignal {
    /// `u = 0`; impulses are encoded in the initial condition.
    #[default]
    Zero,
    /// `u(t) = amplitude * sin(frequency * t)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl InputSignal {
    pub fn is_zero(&self) -> bool {
        matches!(self, InputSignal::Zero)
    }

    pub fn eval(&self, t: f64, channels: usize) -> DVector<f64> {
        match *self {
            InputSignal::Zero => DVector::zeros(channels),
            InputSignal::Sine { amplitude, frequency } => {
                DVector::from_element(channels, amplitude * (frequency * t).sin())
            }
        }
    }
}

/// `dx/dt = A x + H (x ⊗ x) + B u`, `y = C x`.
///
/// The quadratic term is kept as symmetric triplets `(i, j, k, value)`, each
/// meaning `dx_i/dt += value * x_j * x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBilinearModel {
    a: DMatrix<f64>,
    h: Vec<(usize, usize, usize, f64)>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl QuadraticBilinearModel {
    /// Builds the model, merging duplicate triplets and splitting each
    /// off-diagonal entry evenly between `(j, k)` and `(k, j)`.
    pub fn new(
        a: DMatrix<f64>,
        h: impl IntoIterator<Item = (usize, usize, usize, f64)>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {:?}, B is {:?}, C is {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        let mut merged: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (i, j, k, v) in h {
            if i >= n || j >= n || k >= n {
                return Err(Error::DimensionMismatch(format!(
                    "quadratic triplet ({i}, {j}, {k}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidData(format!("non-finite quadratic coefficient at ({i}, {j}, {k})")));
            }
            if j == k {
                *merged.entry((i, j, k)).or_default() += v;
            } else {
                *merged.entry((i, j, k)).or_default() += 0.5 * v;
                *merged.entry((i, k, j)).or_default() += 0.5 * v;
            }
        }
        let h = merged
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((i, j, k), v)| (i, j, k, v))
            .collect();
        Ok(Self { a, h, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn quadratic_terms(&self) -> &[(usize, usize, usize, f64)] {
        &self.h
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `H (x ⊗ y)`.
    pub fn quadratic(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.a.nrows());
        for &(i, j, k, v) in &self.h {
            out[i] += v * x[j] * y[k];
        }
        out
    }
}

impl DynamicalSystem for QuadraticBilinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        let mut f = &self.a * x + self.quadratic(x, x);
        if u.len() > 0 {
            f += &self.b * u;
        }
        f
    }

    fn jvp(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v + self.quadratic(x, v) + self.quadratic(v, x)
    }

    fn jtvp(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64, w: &DVector<f64>) -> DVector<f64> {
        let mut out = self.a.tr_mul(w);
        for &(i, j, k, v) in &self.h {
            out[j] += v * w[i] * x[k];
            out[k] += v * w[i] * x[j];
        }
        out
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    fn observe_jtvp(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.c.tr_mul(w)
    }

    fn input_matrix(&self) -> DMatrix<f64> {
        self.b.clone()
    }

    fn as_quadratic(&self) -> Option<&QuadraticBilinearModel> {
        Some(self)
    }
}

/// Linear time-invariant system `dx/dt = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {:?}, B is {:?}, C is {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Largest real part among the eigenvalues of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }
}

impl DynamicalSystem for LtiSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        let mut f = &self.a * x;
        if u.len() > 0 {
            f += &self.b * u;
        }
        f
    }

    fn jvp(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }

    fn jtvp(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64, w: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(w)
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    fn observe_jtvp(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.c.tr_mul(w)
    }

    fn input_matrix(&self) -> DMatrix<f64> {
        self.b.clone()
    }
}

/// The three-state system with a fast, low-energy state that drives
/// transient growth in the other two:
///
/// ```text
/// x1' = -x1 + 20 x1 x3 + u
/// x2' = -2 x2 + 20 x2 x3 + u
/// x3' = -5 x3 + u
/// y   = x1 + x2 + x3
/// ```
pub fn toy_model() -> QuadraticBilinearModel {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -5.0]));
    let b = DMatrix::from_element(3, 1, 1.0);
    let c = DMatrix::from_element(1, 3, 1.0);
    QuadraticBilinearModel::new(a, [(0, 0, 2, 20.0), (1, 1, 2, 20.0)], b, c)
        .expect("toy model dimensions are consistent")
}

/// Initial state realizing an impulse of magnitude `u0` in every input
/// channel: `x(0) = B u0`.
pub fn impulse_state(sys: &dyn DynamicalSystem, u0: f64) -> DVector<f64> {
    let b = sys.input_matrix();
    &b * DVector::from_element(b.ncols(), u0)
}

/// Full-order trajectory through `nodes`, one RK4 step per node interval.
pub fn simulate(
    sys: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    input: &InputSignal,
    nodes: &[f64],
) -> Result<DenseTrajectory> {
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, model has n = {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    let d = sys.input_dim();
    integrate_on_nodes(|t, x| sys.rhs(x, &input.eval(t, d), t), x0.clone(), nodes)
}

/// Jacobian `df/dx(x0, 0)` assembled column by column from `jvp`, together
/// with `B` and the output Jacobian at `x0`.
pub fn linearize(sys: &dyn DynamicalSystem, x0: &DVector<f64>) -> LtiSystem {
    let n = sys.state_dim();
    let m = sys.output_dim();
    let u = DVector::zeros(sys.input_dim());
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        a.set_column(j, &sys.jvp(x0, &u, 0.0, &e));
    }
    let mut c = DMatrix::zeros(m, n);
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        c.set_row(i, &sys.observe_jtvp(x0, &e).transpose());
    }
    LtiSystem { a, b: sys.input_matrix(), c }
}

/// Any model loadable from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Quadratic(QuadraticBilinearModel),
    Linear(LtiSystem),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Quadratic($m) => $e,
            Model::Linear($m) => $e,
        }
    };
}

impl DynamicalSystem for Model {
    fn state_dim(&self) -> usize {
        delegate!(self, m => m.state_dim())
    }
    fn output_dim(&self) -> usize {
        delegate!(self, m => m.output_dim())
    }
    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        delegate!(self, m => m.rhs(x, u, t))
    }
    fn jvp(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64, v: &DVector<f64>) -> DVector<f64> {
        delegate!(self, m => m.jvp(x, u, t, v))
    }
    fn jtvp(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64, w: &DVector<f64>) -> DVector<f64> {
        delegate!(self, m => m.jtvp(x, u, t, w))
    }
    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        delegate!(self, m => m.observe(x))
    }
    fn observe_jtvp(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        delegate!(self, m => m.observe_jtvp(x, w))
    }
    fn input_matrix(&self) -> DMatrix<f64> {
        delegate!(self, m => m.input_matrix())
    }
    fn as_quadratic(&self) -> Option<&QuadraticBilinearModel> {
        match self {
            Model::Quadratic(q) => Some(q),
            Model::Linear(_) => None,
        }
    }
}

/// On-disk model description. Matrices are flat row-major arrays; nested
/// row arrays are accepted on input.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub a: MatrixData,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<(usize, usize, usize, f64)>,
    pub b: MatrixData,
    pub c: MatrixData,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qb,
    Lti,
}

/// A matrix as either a flat row-major list or a list of rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixData {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixData::Flat(m.transpose().iter().copied().collect())
    }

    pub fn to_matrix(&self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let flat: Vec<f64> = match self {
            MatrixData::Flat(v) => v.clone(),
            MatrixData::Rows(rs) => {
                if rs.len() != rows || rs.iter().any(|r| r.len() != cols) {
                    return Err(Error::DimensionMismatch(format!(
                        "expected {rows} rows of length {cols}"
                    )));
                }
                rs.iter().flatten().copied().collect()
            }
        };
        if flat.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                flat.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<Model> {
        let a = self.a.to_matrix(self.n, self.n)?;
        let b = self.b.to_matrix(self.n, self.d)?;
        let c = self.c.to_matrix(self.m, self.n)?;
        match self.kind {
            ModelKind::Qb => Ok(Model::Quadratic(QuadraticBilinearModel::new(a, self.h, b, c)?)),
            ModelKind::Lti => {
                if !self.h.is_empty() {
                    return Err(Error::InvalidData("an lti model cannot carry quadratic terms".into()));
                }
                Ok(Model::Linear(LtiSystem::new(a, b, c)?))
            }
        }
    }

    pub fn from_model(model: &Model) -> Self {
        let (kind, a, h, b, c) = match model {
            Model::Quadratic(q) => (ModelKind::Qb, &q.a, q.h.clone(), &q.b, &q.c),
            Model::Linear(l) => (ModelKind::Lti, &l.a, Vec::new(), &l.b, &l.c),
        };
        ModelFile {
            kind,
            n: a.nrows(),
            m: c.nrows(),
            d: b.ncols(),
            a: MatrixData::from_matrix(a),
            h,
            b: MatrixData::from_matrix(b),
            c: MatrixData::from_matrix(c),
        }
    }
}
