//! Random states for property sweeps: arbitrary regular states and states on
//! the constraint manifold.

use nalgebra::{Cholesky, DVector};
use rand::Rng;

use crate::constraints::{ConstraintSet, RANK_TOL};
use crate::dynamics::project_to_manifold;
use crate::model::{MassMatrix, State};

/// Uniform state in `[−half_width, half_width]^{2m+1}`.
pub fn uniform_state(m: usize, half_width: f64, rng: &mut impl Rng) -> State {
    let mut draw = || rng.gen_range(-half_width..half_width);
    State {
        t: draw(),
        x: DVector::from_fn(m, |_, _| draw()),
        v: DVector::from_fn(m, |_, _| draw()),
    }
}

/// Uniform state at which the rank condition holds.
pub fn regular_state(cs: &ConstraintSet, half_width: f64, rng: &mut impl Rng) -> State {
    loop {
        let s = uniform_state(cs.dim(), half_width, rng);
        if cs.regularity(&s, RANK_TOL).is_ok_and(|r| r.passed()) {
            return s;
        }
    }
}

/// State with `φ = 0` (and `g = 0` for holonomic sets), found by projecting a
/// uniform draw. Positions go through the `G`-weighted Gauss–Newton
/// projection; velocities through Newton steps on `φ(t, x, ·) = 0`, which
/// converge in one step when φ is affine in velocity.
pub fn on_manifold_state(cs: &ConstraintSet, mass: &MassMatrix, half_width: f64, rng: &mut impl Rng) -> State {
    for _ in 0..10_000 {
        let mut s = uniform_state(cs.dim(), half_width, rng);
        if cs.generator().is_some() {
            match project_to_manifold(&s, cs, mass, 1e-13, 50) {
                Ok(p) => s = p.state,
                Err(_) => continue,
            }
        }
        if let Some(s) = settle_velocity(cs, mass, s) {
            return s;
        }
    }
    panic!("could not sample an on-manifold state");
}

fn settle_velocity(cs: &ConstraintSet, mass: &MassMatrix, mut s: State) -> Option<State> {
    for _ in 0..20 {
        let phi = cs.eval(&s).ok()?;
        if phi.amax() <= 1e-13 {
            return cs.regularity(&s, RANK_TOL).ok()?.passed().then_some(s);
        }
        let phi_v = cs.jacobians(&s).ok()?.phi_v;
        let ginv = mass.solve_matrix(&phi_v.transpose());
        let chol = Cholesky::new(&phi_v * &ginv)?;
        s.v -= ginv * chol.solve(&phi);
    }
    None
}
