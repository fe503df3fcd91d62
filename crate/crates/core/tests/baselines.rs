mod common;

use common::random_stable_lti;
use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use troop::baselines::{lyapunov_residual, solve_lyapunov, KRONECKER_MAX_DIM};
use troop::{balanced_truncation, BalancedRealization, LtiSystem};

/// `C (i w I - A)^{-1} B` for a single-input single-output system.
fn transfer(sys: &LtiSystem, w: f64) -> Complex<f64> {
    let n = sys.a.nrows();
    let lhs = DMatrix::<Complex<f64>>::identity(n, n) * Complex::new(0.0, w) - sys.a.map(|v| Complex::new(v, 0.0));
    let x = lhs.lu().solve(&sys.b.map(|v| Complex::new(v, 0.0))).expect("i w is not an eigenvalue");
    (sys.c.map(|v| Complex::new(v, 0.0)) * x)[(0, 0)]
}

#[test]
fn truncation_error_respects_the_hankel_tail_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sys = random_stable_lti(&mut rng, 10, 1, 1, 0.4);
    let bal = BalancedRealization::new(&sys).unwrap();
    for r in [2, 4, 6] {
        let (t, w) = bal.truncated_bases(r).unwrap();
        assert!((w.transpose() * &t - DMatrix::identity(r, r)).amax() < 1e-8);
        let reduced = LtiSystem::new(w.transpose() * &sys.a * &t, w.transpose() * &sys.b, &sys.c * &t).unwrap();
        let bound = 2.0 * bal.hankel[r..].iter().sum::<f64>();
        // a frequency sweep bounds the H-infinity norm from below
        let peak = (0..=400)
            .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 400.0))
            .map(|w| (transfer(&sys, w) - transfer(&reduced, w)).norm())
            .fold(0.0, f64::max);
        assert!(peak <= bound * (1.0 + 1e-9), "r {r}: peak {peak} exceeds bound {bound}");
    }
}

#[test]
fn truncated_pair_reproduces_the_oblique_projector() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let sys = random_stable_lti(&mut rng, 8, 2, 2, 0.4);
    let (t, w) = BalancedRealization::new(&sys).unwrap().truncated_bases(3).unwrap();
    let pair = balanced_truncation(&sys, 3).unwrap();
    assert!((pair.projector().unwrap() - &t * w.transpose()).amax() < 1e-9);
    assert!(pair.pairing_det() > 0.0);
}

#[test]
fn lyapunov_solvers_agree_across_the_size_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in [KRONECKER_MAX_DIM, KRONECKER_MAX_DIM + 1, 120] {
        let sys = random_stable_lti(&mut rng, n, 3, 1, 0.2);
        let q = &sys.b * sys.b.transpose();
        let x = solve_lyapunov(&sys.a, &q).unwrap();
        assert!(lyapunov_residual(&sys.a, &x, &q) <= 1e-8 * x.norm(), "n = {n}");
        assert!((&x - x.transpose()).amax() <= 1e-10 * x.amax());
    }
}

#[test]
fn unstable_systems_are_rejected() {
    let sys = LtiSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
    assert!(matches!(BalancedRealization::new(&sys), Err(troop::Error::NotHurwitz { .. })));
}
