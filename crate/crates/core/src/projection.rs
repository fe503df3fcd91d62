//! Oblique projection and Petrov-Galerkin reduced models.
//!
//! For a pair `(Phi, Psi)` with `A = (Psi^T Phi)^{-1}` the reduced model is
//!
//! ```text
//! dz/dt = A Psi^T f(Phi z, u, t),   z(t0) = A Psi^T x0,   y = g(Phi z)
//! ```
//!
//! Quadratic-bilinear models get precomputed reduced operators; everything
//! else composes the full-order right-hand side with the projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::{integrate_on_nodes, DenseTrajectory};
use crate::manifold::RepresentativePair;
use crate::system::{DynamicalSystem, InputSignal};

/// Pairings worse conditioned than this are logged.
pub const PAIRING_COND_WARN: f64 = 1e8;

/// `Phi (Psi^T Phi)^{-1} Psi^T x`.
pub fn project(pair: &RepresentativePair, x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pair.phi().cols() * reduce_to_coords(pair, x)?)
}

/// `(Psi^T Phi)^{-1} Psi^T x`.
pub fn reduce_to_coords(pair: &RepresentativePair, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != pair.n() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, pair has n = {}",
            x.len(),
            pair.n()
        )));
    }
    let a = pair.pairing_inverse()?;
    Ok(a * pair.psi().cols().tr_mul(x))
}

/// Reduced operators of a quadratic-bilinear model:
/// `f~(z) = Ar z + sum_i e_i z^T T_i z + Br u`, `y = Cr z`.
#[derive(Debug, Clone)]
pub struct QuadraticOperators {
    pub a: DMatrix<f64>,
    /// One `r x r` slice per reduced equation.
    pub tensor: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
}

impl QuadraticOperators {
    fn quadratic(&self, z: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.tensor.len(), self.tensor.iter().map(|t| z.dot(&(t * v))))
    }

    /// Reduced Jacobian at `z`.
    pub fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.a.clone();
        for (i, t) in self.tensor.iter().enumerate() {
            let row = t.tr_mul(z) + t * z;
            for (c, v) in row.iter().enumerate() {
                j[(i, c)] += v;
            }
        }
        j
    }
}

/// A Petrov-Galerkin reduced model bound to its full-order model.
pub struct ReducedModel<'a> {
    sys: &'a dyn DynamicalSystem,
    pair: RepresentativePair,
    a_inv: DMatrix<f64>,
    /// `A Psi^T`, the oblique left inverse of `Phi`.
    left: DMatrix<f64>,
    fast: Option<QuadraticOperators>,
}

impl std::fmt::Debug for ReducedModel<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedModel")
            .field("n", &self.pair.n())
            .field("r", &self.pair.rank())
            .field("quadratic", &self.fast.is_some())
            .finish()
    }
}

/// Assembles the reduced model; see the module docs.
pub fn assemble_rom<'a>(sys: &'a dyn DynamicalSystem, pair: &RepresentativePair) -> Result<ReducedModel<'a>> {
    ReducedModel::new(sys, pair, true)
}

impl<'a> ReducedModel<'a> {
    /// `precompute = false` forces the generic composed path even for
    /// quadratic-bilinear models.
    pub fn new(sys: &'a dyn DynamicalSystem, pair: &RepresentativePair, precompute: bool) -> Result<Self> {
        if sys.state_dim() != pair.n() {
            return Err(Error::DimensionMismatch(format!(
                "model has n = {}, pair has n = {}",
                sys.state_dim(),
                pair.n()
            )));
        }
        let pairing = pair.pairing();
        let a_inv = pair.pairing_inverse()?;
        let sv = pairing.singular_values();
        let cond = sv.max() / sv.min();
        if cond > PAIRING_COND_WARN {
            log::warn!("pairing matrix is ill-conditioned (cond = {cond:.3e})");
        }
        let left = &a_inv * pair.psi().cols().transpose();
        let fast = if precompute {
            sys.as_quadratic().map(|qb| {
                let phi = pair.phi().cols();
                let r = pair.rank();
                let mut tensor = vec![DMatrix::zeros(r, r); r];
                for &(a, b, c, val) in qb.quadratic_terms() {
                    let pb = phi.row(b);
                    let pc = phi.row(c);
                    let outer = pb.transpose() * pc;
                    for (i, t) in tensor.iter_mut().enumerate() {
                        let w = left[(i, a)] * val;
                        if w != 0.0 {
                            *t += &outer * w;
                        }
                    }
                }
                QuadraticOperators { a: &left * qb.a() * phi, tensor, b: &left * qb.b() }
            })
        } else {
            None
        };
        Ok(Self { sys, pair: pair.clone(), a_inv, left, fast })
    }

    pub fn pair(&self) -> &RepresentativePair {
        &self.pair
    }

    pub fn system(&self) -> &'a dyn DynamicalSystem {
        self.sys
    }

    pub fn rank(&self) -> usize {
        self.pair.rank()
    }

    /// `(Psi^T Phi)^{-1}`.
    pub fn pairing_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// `(Psi^T Phi)^{-1} Psi^T`.
    pub fn left_inverse(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn quadratic_operators(&self) -> Option<&QuadraticOperators> {
        self.fast.as_ref()
    }

    pub fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        self.pair.phi().cols() * z
    }

    pub fn initial_state(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.left * x0
    }

    pub fn rhs(&self, z: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.fast {
            Some(op) => {
                let mut f = &op.a * z + op.quadratic(z, z);
                if u.len() > 0 {
                    f += &op.b * u;
                }
                f
            }
            None => self.rhs_composed(z, u, t),
        }
    }

    /// `A Psi^T f(Phi z, u, t)` evaluated through the full-order model.
    pub fn rhs_composed(&self, z: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        &self.left * self.sys.rhs(&self.lift(z), u, t)
    }

    /// Reduced Jacobian action `A Psi^T (df/dx)(Phi z) Phi v`.
    pub fn jvp(&self, z: &DVector<f64>, u: &DVector<f64>, t: f64, v: &DVector<f64>) -> DVector<f64> {
        match &self.fast {
            Some(op) => &op.a * v + op.quadratic(z, v) + op.quadratic(v, z),
            None => &self.left * self.sys.jvp(&self.lift(z), u, t, &self.lift(v)),
        }
    }

    /// Transposed reduced Jacobian action.
    pub fn jtvp(&self, z: &DVector<f64>, u: &DVector<f64>, t: f64, w: &DVector<f64>) -> DVector<f64> {
        match &self.fast {
            Some(op) => {
                let mut out = op.a.tr_mul(w);
                for (i, t) in op.tensor.iter().enumerate() {
                    if w[i] != 0.0 {
                        out += (t.tr_mul(z) + t * z) * w[i];
                    }
                }
                out
            }
            None => self
                .pair
                .phi()
                .cols()
                .tr_mul(&self.sys.jtvp(&self.lift(z), u, t, &self.left.tr_mul(w))),
        }
    }

    pub fn observe(&self, z: &DVector<f64>) -> DVector<f64> {
        self.sys.observe(&self.lift(z))
    }

    /// `Phi^T (dg/dx)(Phi z)^T w`.
    pub fn observe_jtvp(&self, z: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.pair.phi().cols().tr_mul(&self.sys.observe_jtvp(&self.lift(z), w))
    }

    /// Integrates the reduced model through `nodes` (one RK4 step per node
    /// interval) from the projected initial condition.
    pub fn simulate(&self, x0: &DVector<f64>, input: &InputSignal, nodes: &[f64]) -> Result<DenseTrajectory> {
        let d = self.sys.input_dim();
        let z0 = self.initial_state(x0);
        integrate_on_nodes(|t, z| self.rhs(z, &input.eval(t, d), t), z0, nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::refine_grid;
    use crate::manifold::orthonormalize;
    use crate::system::{impulse_state, simulate, toy_model, LtiSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_pair(rng: &mut ChaCha8Rng, n: usize, r: usize) -> RepresentativePair {
        loop {
            let phi = random(rng, n, r);
            let psi = &phi + random(rng, n, r) * 0.5;
            if let Ok(p) = RepresentativePair::from_bases(&phi, &psi) {
                return p;
            }
        }
    }

    #[test]
    fn symmetric_pair_projects_orthogonally() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let q = orthonormalize(&random(&mut rng, 5, 2)).unwrap();
        let pair = RepresentativePair::symmetric(q.clone());
        let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let px = project(&pair, &x).unwrap();
        assert!((px - q.cols() * q.cols().tr_mul(&x)).norm() < 1e-14);
    }

    #[test]
    fn projection_fixes_range_and_kills_w_perp() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pair = random_pair(&mut rng, 6, 3);
        let z0 = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let x_in = pair.phi().cols() * &z0;
        assert!((project(&pair, &x_in).unwrap() - &x_in).norm() < 1e-12);
        assert!((reduce_to_coords(&pair, &x_in).unwrap() - &z0).norm() < 1e-12);

        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let px = project(&pair, &x).unwrap();
        assert!(pair.psi().cols().tr_mul(&(&x - &px)).norm() < 1e-10);

        let z = reduce_to_coords(&pair, &x).unwrap();
        let defect = (&x - pair.phi().cols() * z).norm();
        assert!((defect - (&x - &px).norm()).abs() < 1e-12);

        // x orthogonal to range(Psi)
        let psi = pair.psi().cols();
        let perp = &x - psi * psi.tr_mul(&x);
        assert!(reduce_to_coords(&pair, &perp).unwrap().norm() < 1e-12);
    }

    #[test]
    fn coordinate_truncation_of_lti() {
        let a = DMatrix::from_fn(4, 4, |i, j| (i as f64 + 1.0) * 10.0 + j as f64);
        let lti = LtiSystem::new(a.clone(), DMatrix::zeros(4, 1), DMatrix::zeros(1, 4)).unwrap();
        let pair = RepresentativePair::symmetric(crate::manifold::OrthoRep::identity_columns(4, 2));
        let rom = assemble_rom(&lti, &pair).unwrap();
        let jac = DMatrix::from_fn(2, 2, |i, j| {
            let mut e = DVector::zeros(2);
            e[j] = 1.0;
            rom.jvp(&DVector::zeros(2), &DVector::zeros(1), 0.0, &e)[i]
        });
        assert_eq!(jac, a.view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn fast_and_composed_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let sys = toy_model();
        let u = DVector::from_vec(vec![0.3]);
        for _ in 0..10 {
            let pair = random_pair(&mut rng, 3, 2);
            let rom = assemble_rom(&sys, &pair).unwrap();
            let slow = ReducedModel::new(&sys, &pair, false).unwrap();
            assert!(rom.quadratic_operators().is_some());
            assert!(slow.quadratic_operators().is_none());
            let z = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let v = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let scale = 1.0 + rom.rhs_composed(&z, &u, 0.0).norm();
            assert!((rom.rhs(&z, &u, 0.0) - rom.rhs_composed(&z, &u, 0.0)).norm() <= 1e-12 * scale);
            assert!((rom.jvp(&z, &u, 0.0, &v) - slow.jvp(&z, &u, 0.0, &v)).norm() <= 1e-12 * scale);
            assert!((rom.jtvp(&z, &u, 0.0, &v) - slow.jtvp(&z, &u, 0.0, &v)).norm() <= 1e-12 * scale);
            let jac = rom.quadratic_operators().unwrap().jacobian(&z);
            assert!((&jac * &v - rom.jvp(&z, &u, 0.0, &v)).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn reduced_jvp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sys = toy_model();
        let pair = random_pair(&mut rng, 3, 2);
        let rom = assemble_rom(&sys, &pair).unwrap();
        let u = DVector::zeros(1);
        let z = DVector::from_vec(vec![0.4, -0.2]);
        let v = DVector::from_vec(vec![0.7, 0.1]);
        let eps = 1e-6;
        let fd = (rom.rhs(&(&z + &v * eps), &u, 0.0) - rom.rhs(&(&z - &v * eps), &u, 0.0)) / (2.0 * eps);
        let jv = rom.jvp(&z, &u, 0.0, &v);
        assert!((&fd - &jv).norm() <= 1e-6 * jv.norm());
    }

    #[test]
    fn full_rank_rom_reproduces_fom() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let sys = toy_model();
        let q = orthonormalize(&random(&mut rng, 3, 3)).unwrap();
        let q2 = orthonormalize(&random(&mut rng, 3, 3)).unwrap();
        let pair = RepresentativePair::new(q, q2).unwrap();
        let rom = assemble_rom(&sys, &pair).unwrap();
        let nodes = refine_grid(&(0..=10).map(f64::from).collect::<Vec<_>>(), 50);
        let x0 = impulse_state(&sys, 1.0);
        let fom = simulate(&sys, &x0, &InputSignal::Zero, &nodes).unwrap();
        let red = rom.simulate(&x0, &InputSignal::Zero, &nodes).unwrap();
        for (x, z) in fom.states().iter().zip(red.states()) {
            let y = sys.observe(x)[0];
            assert!((y - rom.observe(z)[0]).abs() <= 1e-8 * (1.0 + y.abs()));
        }
    }
}
