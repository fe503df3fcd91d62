//! Geometry of the product of two Grassmann manifolds, worked through
//! orthonormal matrix representatives.
//!
//! A point `(V, W)` is carried as a [`RepresentativePair`] of orthonormal
//! `n x r` bases with a positive pairing determinant. Tangent vectors are
//! carried as horizontal lifts ([`TangentLift`]), i.e. matrices `X` with
//! `Phi^T X = 0`. With orthonormal representatives the quotient metric
//! reduces to the Frobenius inner product of the lifts.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Pairing determinants at or below this magnitude do not define a projector.
pub const PAIRING_TOL: f64 = 1e-12;
/// Orthonormality drift that triggers re-orthonormalization after a geodesic step.
pub const DRIFT_TOL: f64 = 1e-12;

/// An `n x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoRep {
    cols: DMatrix<f64>,
}

impl OrthoRep {
    /// Wraps a matrix the caller guarantees to be orthonormal.
    ///
    /// Only the debug build checks the claim.
    pub fn from_orthonormal(cols: DMatrix<f64>) -> Self {
        debug_assert!(orthonormality_defect(&cols) < 1e-6);
        Self { cols }
    }

    /// First `r` columns of the `n x n` identity.
    pub fn identity_columns(n: usize, r: usize) -> Self {
        Self { cols: DMatrix::identity(n, r) }
    }

    pub fn cols(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.cols
    }

    pub fn n(&self) -> usize {
        self.cols.nrows()
    }

    pub fn rank(&self) -> usize {
        self.cols.ncols()
    }

    /// Orthogonal projector `Q Q^T` onto the represented subspace.
    pub fn range_projector(&self) -> DMatrix<f64> {
        &self.cols * self.cols.transpose()
    }

    /// `|| Q^T Q - I ||_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.cols)
    }

    pub(crate) fn negate_first_column(&mut self) {
        self.cols.column_mut(0).neg_mut();
    }
}

pub(crate) fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let r = q.ncols();
    (q.transpose() * q - DMatrix::<f64>::identity(r, r)).norm()
}

/// Orthonormal basis for the column span of `m`.
///
/// Householder QR with the diagonal of `R` made positive, so the result is
/// deterministic.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<OrthoRep> {
    orthonormalize_with_factor(m).map(|(q, _)| q)
}

/// Like [`orthonormalize`], also returning the upper-triangular `R` with
/// `m = Q R`.
pub fn orthonormalize_with_factor(m: &DMatrix<f64>) -> Result<(OrthoRep, DMatrix<f64>)> {
    let (n, r) = m.shape();
    if r == 0 || r > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot orthonormalize a {n}x{r} matrix"
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::RankDeficient { ratio: f64::NAN });
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut rf = qr.r();
    for j in 0..r {
        if rf[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            rf.row_mut(j).neg_mut();
        }
    }
    Ok((OrthoRep { cols: q }, rf))
}

/// Frobenius distance between the orthogonal range projectors of two
/// full-column-rank matrices. Independent of the chosen bases.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = range_projector_of(a);
    let pb = range_projector_of(b);
    (pa - pb).norm()
}

fn range_projector_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = m.transpose() * m;
    let inv = gram
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(m.ncols(), m.ncols(), f64::NAN));
    m * inv * m.transpose()
}

/// Orthonormal representatives `(phi, psi)` of a subspace pair with
/// `det(psi^T phi) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativePair {
    phi: OrthoRep,
    psi: OrthoRep,
}

impl RepresentativePair {
    /// Equivalent to [`fix_sign`].
    pub fn new(phi: OrthoRep, psi: OrthoRep) -> Result<Self> {
        fix_sign(phi, psi)
    }

    /// Orthonormalizes arbitrary full-rank bases and fixes the pairing sign.
    pub fn from_bases(phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<Self> {
        fix_sign(orthonormalize(phi)?, orthonormalize(psi)?)
    }

    /// The orthogonal-projection pair `V = W`.
    pub fn symmetric(basis: OrthoRep) -> Self {
        Self { psi: basis.clone(), phi: basis }
    }

    pub fn phi(&self) -> &OrthoRep {
        &self.phi
    }

    pub fn psi(&self) -> &OrthoRep {
        &self.psi
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn rank(&self) -> usize {
        self.phi.rank()
    }

    /// `psi^T phi`.
    pub fn pairing(&self) -> DMatrix<f64> {
        self.psi.cols.transpose() * &self.phi.cols
    }

    pub fn pairing_det(&self) -> f64 {
        self.pairing().determinant()
    }

    /// `(psi^T phi)^{-1}` by LU with partial pivoting.
    pub fn pairing_inverse(&self) -> Result<DMatrix<f64>> {
        let m = self.pairing();
        let det = m.clone().lu().determinant();
        if det.abs() <= PAIRING_TOL || !det.is_finite() {
            return Err(Error::SingularPairing { det });
        }
        m.lu().try_inverse().ok_or(Error::SingularPairing { det })
    }

    /// Oblique projector `phi (psi^T phi)^{-1} psi^T`.
    pub fn projector(&self) -> Result<DMatrix<f64>> {
        let a = self.pairing_inverse()?;
        Ok(&self.phi.cols * a * self.psi.cols.transpose())
    }

    pub fn into_parts(self) -> (OrthoRep, OrthoRep) {
        (self.phi, self.psi)
    }
}

/// Flips the first column of `phi` so that `det(psi^T phi) > 0`.
pub fn fix_sign(mut phi: OrthoRep, psi: OrthoRep) -> Result<RepresentativePair> {
    if phi.n() != psi.n() || phi.rank() != psi.rank() {
        return Err(Error::DimensionMismatch(format!(
            "phi is {}x{}, psi is {}x{}",
            phi.n(),
            phi.rank(),
            psi.n(),
            psi.rank()
        )));
    }
    let det = (psi.cols.transpose() * &phi.cols).determinant();
    if !det.is_finite() || det.abs() <= PAIRING_TOL {
        return Err(Error::SingularPairing { det });
    }
    if det < 0.0 {
        phi.negate_first_column();
    }
    Ok(RepresentativePair { phi, psi })
}

/// Horizontal lift `(X, Y)` of a tangent vector at a representative pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentLift {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl TangentLift {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Self { x: DMatrix::zeros(n, r), y: DMatrix::zeros(n, r) }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { x: &self.x * s, y: &self.y * s }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &TangentLift) {
        self.x += &other.x * s;
        self.y += &other.y * s;
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Euclidean (Frobenius) inner product of the stacked lifts.
    pub fn dot(&self, other: &TangentLift) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub(crate) fn negate_first_x_column(&mut self) {
        self.x.column_mut(0).neg_mut();
    }

    /// Lift at `(phi S, psi T)` of the same tangent vector.
    pub fn rebased(&self, s: &DMatrix<f64>, t: &DMatrix<f64>) -> Self {
        Self { x: &self.x * s, y: &self.y * t }
    }

    /// Projects both blocks onto the horizontal spaces at `pair`.
    pub fn horizontal(&self, pair: &RepresentativePair) -> Self {
        Self {
            x: horizontal_project(pair.phi(), &self.x),
            y: horizontal_project(pair.psi(), &self.y),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// Quotient metric `<a, b>` at an orthonormal pair.
pub fn metric(pair: &RepresentativePair, a: &TangentLift, b: &TangentLift) -> Result<f64> {
    let shape = (pair.n(), pair.rank());
    for m in [&a.x, &a.y, &b.x, &b.y] {
        if m.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "lift block is {:?}, expected {:?}",
                m.shape(),
                shape
            )));
        }
    }
    Ok(a.dot(b))
}

/// Quotient metric at arbitrary full-rank representatives:
/// `Tr[(phi^T phi)^{-1} Xa^T Xb] + Tr[(psi^T psi)^{-1} Ya^T Yb]`.
pub fn metric_at(
    phi: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    a: &TangentLift,
    b: &TangentLift,
) -> Result<f64> {
    let gphi = (phi.transpose() * phi)
        .try_inverse()
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let gpsi = (psi.transpose() * psi)
        .try_inverse()
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    Ok((gphi * a.x.transpose() * &b.x).trace() + (gpsi * a.y.transpose() * &b.y).trace())
}

/// `m - base (base^T m)`, the orthogonal projection onto the horizontal space.
pub fn horizontal_project(base: &OrthoRep, m: &DMatrix<f64>) -> DMatrix<f64> {
    m - &base.cols * (base.cols.transpose() * m)
}

/// Great-circle geodesic `alpha -> exp_base(alpha * dir)` on one Grassmann
/// factor, with the thin SVD of `dir` cached.
#[derive(Debug, Clone)]
pub struct Geodesic {
    base: DMatrix<f64>,
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

impl Geodesic {
    pub fn new(base: &OrthoRep, dir: &DMatrix<f64>) -> Self {
        let r = base.rank();
        let svd = SVD::new(dir.clone(), true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) if svd.singular_values.iter().all(|s| s.is_finite()) => (u, v_t),
            _ => (DMatrix::zeros(base.n(), r), DMatrix::identity(r, r)),
        };
        Self {
            base: base.cols.clone(),
            u,
            sigma: svd.singular_values.iter().copied().collect(),
            v: v_t.transpose(),
        }
    }

    fn is_stationary(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    /// `[base V cos(alpha S) + U sin(alpha S)] V^T`.
    pub fn point(&self, alpha: f64) -> OrthoRep {
        if alpha == 0.0 || self.is_stationary() {
            return OrthoRep { cols: self.base.clone() };
        }
        let cos = self.diag(|s| (alpha * s).cos());
        let sin = self.diag(|s| (alpha * s).sin());
        let q = (&self.base * &self.v * cos + &self.u * sin) * self.v.transpose();
        if orthonormality_defect(&q) > DRIFT_TOL {
            if let Ok(fixed) = orthonormalize(&q) {
                return fixed;
            }
        }
        OrthoRep { cols: q }
    }

    /// Parallel translation of the horizontal vector `w` from `base` to
    /// `point(alpha)`.
    pub fn translate(&self, alpha: f64, w: &DMatrix<f64>) -> DMatrix<f64> {
        if alpha == 0.0 || self.is_stationary() {
            return w.clone();
        }
        let cos = self.diag(|s| (alpha * s).cos());
        let sin = self.diag(|s| (alpha * s).sin());
        let ut_w = self.u.transpose() * w;
        (-&self.base * &self.v * sin + &self.u * cos) * &ut_w + w - &self.u * ut_w
    }

    /// Velocity of the geodesic at `alpha`, i.e. `dir` translated along itself.
    pub fn velocity(&self, alpha: f64) -> DMatrix<f64> {
        let dir = &self.u * self.diag(|s| s) * self.v.transpose();
        self.translate(alpha, &dir)
    }

    fn diag(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let k = self.sigma.len();
        DMatrix::from_fn(k, k, |i, j| if i == j { f(self.sigma[i]) } else { 0.0 })
    }
}

/// `exp_base(alpha * dir)`.
pub fn geodesic_step(base: &OrthoRep, dir: &DMatrix<f64>, alpha: f64) -> OrthoRep {
    Geodesic::new(base, dir).point(alpha)
}

/// Parallel translation of `v` along the geodesic `exp_base(t * dir)` to `t = alpha`.
pub fn parallel_translate(
    base: &OrthoRep,
    dir: &DMatrix<f64>,
    alpha: f64,
    v: &DMatrix<f64>,
) -> DMatrix<f64> {
    Geodesic::new(base, dir).translate(alpha, v)
}

/// QR-based retraction `span(base + v)`.
pub fn retract(base: &OrthoRep, v: &DMatrix<f64>) -> Result<OrthoRep> {
    orthonormalize(&(&base.cols + v))
}

/// Vector transport obtained by differentiating [`retract`]: the horizontal
/// projection of `v` at the representative `base + dir`.
///
/// The returned matrix is the lift at the (generally non-orthonormal)
/// representative `base + dir`; its metric norm there never exceeds the norm
/// of `v` at `base`.
pub fn transport_by_projection(
    base: &OrthoRep,
    dir: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let target = orthonormalize(&(&base.cols + dir))?;
    Ok(horizontal_project(&target, v))
}

/// Curve used for the line search on one Grassmann factor.
#[derive(Debug, Clone)]
pub enum ComponentPath {
    Exponential(Geodesic),
    Retraction { base: DMatrix<f64>, dir: DMatrix<f64> },
}

/// Which curve and transport the optimizer walks along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    /// Geodesics with parallel translation.
    #[default]
    Exponential,
    /// QR retraction with the projection vector transport.
    Retraction,
}

impl ComponentPath {
    pub fn new(mode: TransportMode, base: &OrthoRep, dir: &DMatrix<f64>) -> Self {
        match mode {
            TransportMode::Exponential => ComponentPath::Exponential(Geodesic::new(base, dir)),
            TransportMode::Retraction => {
                ComponentPath::Retraction { base: base.cols.clone(), dir: dir.clone() }
            }
        }
    }

    /// Orthonormal representative of the curve at `alpha`, and the
    /// transport of `w` (a lift at the start) expressed at that representative.
    pub fn point_and_transport(
        &self,
        alpha: f64,
        w: &DMatrix<f64>,
    ) -> Result<(OrthoRep, DMatrix<f64>)> {
        match self {
            ComponentPath::Exponential(g) => Ok((g.point(alpha), g.translate(alpha, w))),
            ComponentPath::Retraction { base, dir } => {
                let moved = base + dir * alpha;
                let (q, r) = orthonormalize_with_factor(&moved)?;
                let projected = horizontal_project(&q, w);
                // lift at Q = (base + alpha dir) R^{-1} transforms by R^{-1}
                let r_inv = r
                    .try_inverse()
                    .ok_or(Error::RankDeficient { ratio: 0.0 })?;
                Ok((q, projected * r_inv))
            }
        }
    }

    pub fn direction(&self) -> DMatrix<f64> {
        match self {
            ComponentPath::Exponential(g) => g.velocity(0.0),
            ComponentPath::Retraction { dir, .. } => dir.clone(),
        }
    }
}
