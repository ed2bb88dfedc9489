//! Extended phase space, mass matrix, active forces and the smooth-map
//! abstraction shared by constraints, reparametrizations and realizations.

mod force;
mod map;
mod mass;
mod state;

pub use force::{uniform_gravity, ConstantForce, FnForce, ForceField, LinearDamping, LinearSpring, NoForce};
pub use map::{fd_jacobian, fd_step, FnMap, Provenance, SmoothMap};
pub use mass::{check_spd, MassMatrix, SpdVerdict};
pub use state::State;

use std::sync::Arc;

/// A mass matrix paired with its active force field.
#[derive(Clone)]
pub struct MechanicalSystem {
    pub mass: MassMatrix,
    pub force: Arc<dyn ForceField>,
}

impl MechanicalSystem {
    pub fn new(mass: MassMatrix, force: Arc<dyn ForceField>) -> crate::Result<Self> {
        crate::error::ensure_len("force dimension", mass.dim(), force.dim())?;
        Ok(Self { mass, force })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }
}

impl std::fmt::Debug for MechanicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}
