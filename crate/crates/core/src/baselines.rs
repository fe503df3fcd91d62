//! Baseline subspaces: proper orthogonal decomposition of state snapshots
//! and balanced truncation of a stable linear system.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::integrate::refine_grid;
use crate::manifold::{orthonormalize, RepresentativePair};
use crate::system::{linearize, simulate, DynamicalSystem, LtiSystem};

/// Singular values below this fraction of the largest count as zero.
pub const SPECTRAL_TOL: f64 = 1e-12;

/// Largest state dimension solved by the dense Kronecker method; larger
/// systems use the squared Smith iteration.
pub const KRONECKER_MAX_DIM: usize = 40;

/// State snapshots as columns, optionally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    weights: Option<Vec<f64>>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::InvalidData("snapshot matrix is empty".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("snapshot matrix has non-finite entries".into()));
        }
        if let Some(w) = &weights {
            if w.len() != data.ncols() || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidData("snapshot weights must be finite, non-negative, one per column".into()));
            }
        }
        Ok(Self { data, weights })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Columns scaled by the square roots of their weights.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut x = self.data.clone();
        if let Some(w) = &self.weights {
            for (j, wj) in w.iter().enumerate() {
                x.column_mut(j).scale_mut(wj.sqrt());
            }
        }
        x
    }
}

/// Full-order states at every integrator node of every trajectory in
/// `data`, weighted by the trapezoid rule so the weighted snapshot
/// covariance approximates `sum_m int x x^T dt`. A single-sample trajectory
/// contributes its initial state with unit weight.
pub fn snapshots_from_dataset(
    sys: &dyn DynamicalSystem,
    data: &TrajectoryDataset,
    steps_per_interval: usize,
) -> Result<SnapshotMatrix> {
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for traj in data.trajectories() {
        let nodes = refine_grid(&traj.times, steps_per_interval.max(1));
        let states = simulate(sys, &traj.x0, &traj.input, &nodes)?;
        if nodes.len() == 1 {
            weights.push(1.0);
        } else {
            weights.extend((0..nodes.len()).map(|k| {
                let left = if k > 0 { nodes[k] - nodes[k - 1] } else { 0.0 };
                let right = if k + 1 < nodes.len() { nodes[k + 1] - nodes[k] } else { 0.0 };
                0.5 * (left + right)
            }));
        }
        cols.extend(states.states().iter().cloned());
    }
    SnapshotMatrix::new(DMatrix::from_columns(&cols), Some(weights))
}

/// `Phi = Psi =` the leading `r` left singular vectors of the snapshots.
pub fn pod(snapshots: &SnapshotMatrix, r: usize) -> Result<RepresentativePair> {
    let x = snapshots.weighted();
    let n = x.nrows();
    if r == 0 || r > n {
        return Err(Error::InvalidConfig(format!("rank {r} is outside 1..={n}")));
    }
    let svd = SVD::new(x, true, false);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if r > sv.len() || !(sv[order[r - 1]] > SPECTRAL_TOL * sv[order[0]]) {
        let ratio = if r > sv.len() || sv[order[0]] == 0.0 { 0.0 } else { sv[order[r - 1]] / sv[order[0]] };
        return Err(Error::RankDeficient { ratio });
    }
    let u = svd.u.expect("left singular vectors requested");
    let basis = DMatrix::from_columns(&order[..r].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    Ok(RepresentativePair::symmetric(orthonormalize(&basis)?))
}

/// Solves `A X + X A^T + Q = 0` for stable `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("A is {:?}, Q is {:?}", a.shape(), q.shape())));
    }
    let x = if n <= KRONECKER_MAX_DIM { lyapunov_kronecker(a, q)? } else { lyapunov_smith(a, q)? };
    // symmetrize round-off
    Ok((&x + x.transpose()) * 0.5)
}

/// Dense solve of `(I (x) A + A (x) I) vec X = -vec Q`.
fn lyapunov_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotHurwitz { max_real: f64::NAN })?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Squared Smith iteration on the Cayley-transformed equation.
fn lyapunov_smith(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eigs = a.complex_eigenvalues();
    let lo = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let p = (lo * hi).sqrt().max(f64::MIN_POSITIVE);
    let eye = DMatrix::<f64>::identity(n, n);
    let shifted = (a - &eye * p)
        .try_inverse()
        .ok_or_else(|| Error::NotHurwitz { max_real: f64::NAN })?;
    let mut ak = &shifted * (a + &eye * p);
    let mut x = &shifted * q * shifted.transpose() * (2.0 * p);
    for _ in 0..100 {
        let step = &ak * &x * ak.transpose();
        x += &step;
        if step.norm() <= f64::EPSILON * x.norm() {
            return Ok(x);
        }
        ak = &ak * &ak;
    }
    Ok(x)
}

/// `|A X + X A^T + Q|_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a * x + x * a.transpose() + q).norm()
}

/// Gramians and the square-root balancing transform of a stable system.
#[derive(Debug, Clone)]
pub struct BalancedRealization {
    /// Controllability Gramian.
    pub p: DMatrix<f64>,
    /// Observability Gramian.
    pub q: DMatrix<f64>,
    /// Hankel singular values in decreasing order.
    pub hankel: Vec<f64>,
    /// `L V` with `P = L L^T` and `R^T L = U S V^T`.
    left: DMatrix<f64>,
    /// `R U`.
    right: DMatrix<f64>,
}

impl BalancedRealization {
    pub fn new(sys: &LtiSystem) -> Result<Self> {
        let max_real = sys.spectral_abscissa();
        if !(max_real < 0.0) {
            return Err(Error::NotHurwitz { max_real });
        }
        let bbt = &sys.b * sys.b.transpose();
        let ctc = sys.c.transpose() * &sys.c;
        let p = solve_lyapunov(&sys.a, &bbt)?;
        let q = solve_lyapunov(&sys.a.transpose(), &ctc)?;
        let l = psd_factor(&p)?;
        let r = psd_factor(&q)?;
        let svd = SVD::new(r.transpose() * &l, true, true);
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let hankel = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
        let v = DMatrix::from_columns(&order.iter().map(|&i| v_t.row(i).transpose()).collect::<Vec<_>>());
        Ok(Self { left: &l * v, right: &r * u, p, q, hankel })
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        let n = self.hankel.len();
        if r == 0 || r > n {
            return Err(Error::InvalidConfig(format!("rank {r} is outside 1..={n}")));
        }
        let ratio = if self.hankel[0] > 0.0 { self.hankel[r - 1] / self.hankel[0] } else { 0.0 };
        if !(ratio > SPECTRAL_TOL) {
            return Err(Error::NearSingularGramian { ratio });
        }
        Ok(())
    }

    /// Leading `r` columns of the balancing transform and of its dual:
    /// `T_r = L V_r S_r^{-1/2}`, `W_r = R U_r S_r^{-1/2}`, with `W_r^T T_r = I`.
    pub fn truncated_bases(&self, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_rank(r)?;
        let scale = DMatrix::from_diagonal(&DVector::from_iterator(r, self.hankel[..r].iter().map(|s| s.powf(-0.5))));
        Ok((self.left.columns(0, r) * &scale, self.right.columns(0, r) * scale))
    }

    /// Full balancing transform `T` and its inverse `W^T`.
    pub fn transform(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (t, w) = self.truncated_bases(self.hankel.len())?;
        Ok((t, w.transpose()))
    }
}

/// `L` with `L L^T = m` for a symmetric positive semidefinite `m`, from the
/// eigendecomposition with slightly negative eigenvalues clamped to zero.
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < -SPECTRAL_TOL * top.max(1.0) {
            return Err(Error::NearSingularGramian { ratio: v / top });
        }
        roots[i] = v.max(0.0).sqrt();
    }
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Balanced truncation to rank `r`, returned as orthonormal representatives
/// of the spans of `T_r` and `W_r` (same oblique projector).
pub fn balanced_truncation(sys: &LtiSystem, r: usize) -> Result<RepresentativePair> {
    let (t, w) = BalancedRealization::new(sys)?.truncated_bases(r)?;
    RepresentativePair::from_bases(&t, &w)
}

/// Balanced truncation of the linearization about the origin.
pub fn bt_init_for(sys: &dyn DynamicalSystem, r: usize) -> Result<RepresentativePair> {
    let lin = linearize(sys, &DVector::zeros(sys.state_dim()));
    balanced_truncation(&lin, r)
}
