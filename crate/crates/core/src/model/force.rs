use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{FnMap, MassMatrix, Provenance, SmoothMap, State};
use crate::error::Result;

/// Active force field `f(t, x, v)`, a covector of length `m`.
pub trait ForceField: SmoothMap {
    /// Potential energy `V(t, x)` with `f = −∂V/∂x`, when the field is
    /// potential.
    fn potential(&self, _t: f64, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoForce {
    pub dim: usize,
}

impl SmoothMap for NoForce {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _s: &State) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
    fn d_x(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim, self.dim))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim, self.dim))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl ForceField for NoForce {
    fn potential(&self, _t: f64, _x: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
}

/// Constant force, potential `V = −f·x`.
#[derive(Debug, Clone)]
pub struct ConstantForce {
    pub force: DVector<f64>,
}

impl SmoothMap for ConstantForce {
    fn dim(&self) -> usize {
        self.force.len()
    }
    fn value(&self, _s: &State) -> DVector<f64> {
        self.force.clone()
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim()))
    }
    fn d_x(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim(), self.dim()))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim(), self.dim()))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl ForceField for ConstantForce {
    fn potential(&self, _t: f64, x: &DVector<f64>) -> Option<f64> {
        Some(-self.force.dot(x))
    }
}

/// Uniform gravity of strength `g0` pulling every coordinate whose index is
/// `axis` modulo `spatial_dim` towards negative values, weighted by `G`:
/// `f = −g0 · G e`.
pub fn uniform_gravity(g0: f64, axis: usize, spatial_dim: usize, mass: &MassMatrix) -> ConstantForce {
    let m = mass.dim();
    let e = DVector::from_fn(m, |j, _| if j % spatial_dim == axis { 1.0 } else { 0.0 });
    ConstantForce {
        force: -g0 * (mass.matrix() * e),
    }
}

/// Hooke spring to a fixed anchor: `f = −k (x − anchor)`.
#[derive(Debug, Clone)]
pub struct LinearSpring {
    pub stiffness: f64,
    pub anchor: DVector<f64>,
}

impl SmoothMap for LinearSpring {
    fn dim(&self) -> usize {
        self.anchor.len()
    }
    fn value(&self, s: &State) -> DVector<f64> {
        -self.stiffness * (&s.x - &self.anchor)
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim()))
    }
    fn d_x(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(-self.stiffness * DMatrix::identity(self.dim(), self.dim()))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim(), self.dim()))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl ForceField for LinearSpring {
    fn potential(&self, _t: f64, x: &DVector<f64>) -> Option<f64> {
        Some(0.5 * self.stiffness * (x - &self.anchor).norm_squared())
    }
}

/// Viscous damping `f = −c v`; not potential.
#[derive(Debug, Clone, Copy)]
pub struct LinearDamping {
    pub coefficient: f64,
    pub dim: usize,
}

impl SmoothMap for LinearDamping {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, s: &State) -> DVector<f64> {
        -self.coefficient * &s.v
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
    fn d_x(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim, self.dim))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(-self.coefficient * DMatrix::identity(self.dim, self.dim))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl ForceField for LinearDamping {}

type PotentialFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;

/// Force built from closures, with an optional potential.
#[derive(Clone)]
pub struct FnForce {
    map: FnMap,
    potential: Option<PotentialFn>,
}

impl FnForce {
    pub fn new(map: FnMap) -> Self {
        Self { map, potential: None }
    }

    pub fn with_potential(mut self, v: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Some(Arc::new(v));
        self
    }
}

impl SmoothMap for FnForce {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn value(&self, s: &State) -> DVector<f64> {
        self.map.value(s)
    }
    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        self.map.d_t(s)
    }
    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        self.map.d_x(s)
    }
    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        self.map.d_v(s)
    }
    fn provenance(&self) -> Provenance {
        self.map.provenance()
    }
}

impl ForceField for FnForce {
    fn potential(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        self.potential.as_ref().map(|v| v(t, x))
    }
}
