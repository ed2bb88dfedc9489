//! Analytic constraint generators, embeddings and forces behind the
//! built-in scenarios.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::constraints::{AffineParts, ConstraintSet, LiftCurvature};
use crate::error::Result;
use crate::generalized::Embedding;
use crate::model::{Provenance, SmoothMap, State};

/// `g = (|x|² − r²) / 2`: a point on a circle (m = 2) or sphere (m = 3).
#[derive(Debug, Clone, Copy)]
pub struct SphereGenerator {
    pub radius: f64,
    pub dim: usize,
}

impl SmoothMap for SphereGenerator {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, s: &State) -> DVector<f64> {
        DVector::from_element(1, 0.5 * (s.x.norm_squared() - self.radius * self.radius))
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(1))
    }
    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(1, self.dim, s.x.as_slice()))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(1, self.dim))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl LiftCurvature for SphereGenerator {
    fn lift_d_t(&self, _s: &State) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn lift_d_x(&self, s: &State) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.dim, s.v.as_slice())
    }
}

pub fn sphere(radius: f64, dim: usize) -> Result<ConstraintSet> {
    let g = Arc::new(SphereGenerator { radius, dim });
    ConstraintSet::lift_holonomic_with(dim, g.clone(), g)
}

/// Bead on a straight wire through the origin spinning at rate `ω`:
/// `g = −x sin ωt + y cos ωt`.
#[derive(Debug, Clone, Copy)]
pub struct RotatingLineGenerator {
    pub omega: f64,
}

impl SmoothMap for RotatingLineGenerator {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, s: &State) -> DVector<f64> {
        let (sn, cs) = (self.omega * s.t).sin_cos();
        DVector::from_element(1, -s.x[0] * sn + s.x[1] * cs)
    }
    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        let (sn, cs) = (self.omega * s.t).sin_cos();
        Ok(DVector::from_element(1, -self.omega * (s.x[0] * cs + s.x[1] * sn)))
    }
    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        let (sn, cs) = (self.omega * s.t).sin_cos();
        Ok(DMatrix::from_row_slice(1, 2, &[-sn, cs]))
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(1, 2))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl LiftCurvature for RotatingLineGenerator {
    fn lift_d_t(&self, s: &State) -> DVector<f64> {
        let w = self.omega;
        let (sn, cs) = (w * s.t).sin_cos();
        let g_tt = w * w * (s.x[0] * sn - s.x[1] * cs);
        let g_tx_v = -w * (cs * s.v[0] + sn * s.v[1]);
        DVector::from_element(1, g_tt + g_tx_v)
    }
    fn lift_d_x(&self, s: &State) -> DMatrix<f64> {
        let w = self.omega;
        let (sn, cs) = (w * s.t).sin_cos();
        DMatrix::from_row_slice(1, 2, &[-w * cs, -w * sn])
    }
}

pub fn rotating_line(omega: f64) -> Result<ConstraintSet> {
    let g = Arc::new(RotatingLineGenerator { omega });
    ConstraintSet::lift_holonomic_with(2, g.clone(), g)
}

/// `g = x_index`.
#[derive(Debug, Clone, Copy)]
pub struct CoordinatePlane {
    pub index: usize,
    pub dim: usize,
}

impl SmoothMap for CoordinatePlane {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, s: &State) -> DVector<f64> {
        DVector::from_element(1, s.x[self.index])
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(1))
    }
    fn d_x(&self, _s: &State) -> Result<DMatrix<f64>> {
        let mut row = DMatrix::zeros(1, self.dim);
        row[(0, self.index)] = 1.0;
        Ok(row)
    }
    fn d_v(&self, _s: &State) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(1, self.dim))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl LiftCurvature for CoordinatePlane {
    fn lift_d_t(&self, _s: &State) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn lift_d_x(&self, _s: &State) -> DMatrix<f64> {
        DMatrix::zeros(1, self.dim)
    }
}

pub fn coordinate_plane(index: usize, dim: usize) -> Result<ConstraintSet> {
    let g = Arc::new(CoordinatePlane { index, dim });
    ConstraintSet::lift_holonomic_with(dim, g.clone(), g)
}

/// Knife edge (Chaplygin-type blade) in coordinates `(x, y, θ)`:
/// `φ = vx sin θ − vy cos θ`, no sideways slip.
#[derive(Debug, Clone, Copy)]
pub struct KnifeEdge;

impl SmoothMap for KnifeEdge {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, s: &State) -> DVector<f64> {
        let (sn, cs) = s.x[2].sin_cos();
        DVector::from_element(1, s.v[0] * sn - s.v[1] * cs)
    }
    fn d_t(&self, _s: &State) -> Result<DVector<f64>> {
        Ok(DVector::zeros(1))
    }
    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        let (sn, cs) = s.x[2].sin_cos();
        Ok(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, s.v[0] * cs + s.v[1] * sn]))
    }
    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        Ok(self.matrix(s.t, &s.x))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

impl AffineParts for KnifeEdge {
    fn offset(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn matrix(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let (sn, cs) = x[2].sin_cos();
        DMatrix::from_row_slice(1, 3, &[sn, -cs, 0.0])
    }
}

pub fn knife_edge() -> Result<ConstraintSet> {
    ConstraintSet::affine(3, Arc::new(KnifeEdge), Arc::new(KnifeEdge))
}

/// `u(θ) = l (sin θ, −cos θ)`: planar pendulum hanging along −y.
#[derive(Debug, Clone, Copy)]
pub struct CircleChart {
    pub radius: f64,
}

impl Embedding for CircleChart {
    fn ambient_dim(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        1
    }
    fn position(&self, _t: f64, y: &DVector<f64>) -> DVector<f64> {
        let (sn, cs) = y[0].sin_cos();
        DVector::from_vec(vec![self.radius * sn, -self.radius * cs])
    }
    fn d_t(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn d_y(&self, _t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        let (sn, cs) = y[0].sin_cos();
        DMatrix::from_column_slice(2, 1, &[self.radius * cs, self.radius * sn])
    }
    fn d_tt(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn d_ty(&self, _t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 1)
    }
    fn d_yy(&self, _t: f64, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let (sn, cs) = y[0].sin_cos();
        vec![DMatrix::from_column_slice(2, 1, &[-self.radius * sn, self.radius * cs])]
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// Spherical chart `u(θ, ϕ) = l (sin θ cos ϕ, sin θ sin ϕ, −cos θ)`,
/// degenerate at the poles `θ ∈ {0, π}`.
#[derive(Debug, Clone, Copy)]
pub struct SphereChart {
    pub radius: f64,
}

impl Embedding for SphereChart {
    fn ambient_dim(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        2
    }
    fn in_domain(&self, _t: f64, y: &DVector<f64>) -> bool {
        y[0] > 0.0 && y[0] < std::f64::consts::PI
    }
    fn position(&self, _t: f64, y: &DVector<f64>) -> DVector<f64> {
        let l = self.radius;
        let (st, ct) = y[0].sin_cos();
        let (sp, cp) = y[1].sin_cos();
        DVector::from_vec(vec![l * st * cp, l * st * sp, -l * ct])
    }
    fn d_t(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn d_y(&self, _t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        let l = self.radius;
        let (st, ct) = y[0].sin_cos();
        let (sp, cp) = y[1].sin_cos();
        DMatrix::from_row_slice(3, 2, &[l * ct * cp, -l * st * sp, l * ct * sp, l * st * cp, l * st, 0.0])
    }
    fn d_tt(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn d_ty(&self, _t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 2)
    }
    fn d_yy(&self, _t: f64, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let l = self.radius;
        let (st, ct) = y[0].sin_cos();
        let (sp, cp) = y[1].sin_cos();
        // ∂u_y/∂θ and ∂u_y/∂ϕ
        let d_theta = DMatrix::from_row_slice(3, 2, &[-l * st * cp, -l * ct * sp, -l * st * sp, l * ct * cp, l * ct, 0.0]);
        let d_phi = DMatrix::from_row_slice(3, 2, &[-l * ct * sp, -l * st * cp, l * ct * cp, -l * st * sp, 0.0, 0.0]);
        vec![d_theta, d_phi]
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// `u(t, s) = (s cos ωt, s sin ωt)`, the arclength chart of the spinning wire.
#[derive(Debug, Clone, Copy)]
pub struct RotatingLineChart {
    pub omega: f64,
}

impl Embedding for RotatingLineChart {
    fn ambient_dim(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        1
    }
    fn position(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let (sn, cs) = (self.omega * t).sin_cos();
        DVector::from_vec(vec![y[0] * cs, y[0] * sn])
    }
    fn d_t(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let w = self.omega;
        let (sn, cs) = (w * t).sin_cos();
        DVector::from_vec(vec![-w * y[0] * sn, w * y[0] * cs])
    }
    fn d_y(&self, t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        let (sn, cs) = (self.omega * t).sin_cos();
        DMatrix::from_column_slice(2, 1, &[cs, sn])
    }
    fn d_tt(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let w = self.omega;
        let (sn, cs) = (w * t).sin_cos();
        DVector::from_vec(vec![-w * w * y[0] * cs, -w * w * y[0] * sn])
    }
    fn d_ty(&self, t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        let w = self.omega;
        let (sn, cs) = (w * t).sin_cos();
        DMatrix::from_column_slice(2, 1, &[-w * sn, w * cs])
    }
    fn d_yy(&self, _t: f64, _y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 1)]
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// `u(y) = y`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityChart {
    pub dim: usize,
}

impl Embedding for IdentityChart {
    fn ambient_dim(&self) -> usize {
        self.dim
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn position(&self, _t: f64, y: &DVector<f64>) -> DVector<f64> {
        y.clone()
    }
    fn d_t(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn d_y(&self, _t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn d_tt(&self, _t: f64, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn d_ty(&self, _t: f64, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn d_yy(&self, _t: f64, _y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}
