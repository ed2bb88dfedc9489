//! Constraint sets `φ(t, x, v) = 0`, their Jacobians, the rank condition,
//! virtual displacements and holonomic lifts `φ = g_t + g_x v`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_len, Error, Result};
use crate::linalg;
use crate::model::{Provenance, SmoothMap, State};

/// Default relative rank tolerance: the rank condition holds when
/// `σ_min(φ_v) > tol · max(1, ‖φ_v‖₂)`.
pub const RANK_TOL: f64 = 1e-8;

/// The three partial derivatives of `φ` at one state.
#[derive(Debug, Clone)]
pub struct ConstraintJacobians {
    pub phi_t: DVector<f64>,
    pub phi_x: DMatrix<f64>,
    pub phi_v: DMatrix<f64>,
    pub provenance: Provenance,
}

/// `a(t, x)` and `A(t, x)` of a constraint affine in velocity.
pub trait AffineParts: Send + Sync {
    fn offset(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn matrix(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Closed-form `t`- and `x`-derivatives of a holonomic lift. These need
/// second derivatives of the generator `g`:
/// `φ_t = g_tt + g_tx v` and `φ_x = g_xt + ∂_x(g_x v)`.
pub trait LiftCurvature: Send + Sync {
    fn lift_d_t(&self, s: &State) -> DVector<f64>;
    fn lift_d_x(&self, s: &State) -> DMatrix<f64>;
}

#[derive(Clone)]
enum Structure {
    General,
    Affine(Arc<dyn AffineParts>),
    Holonomic(Arc<dyn SmoothMap>),
}

/// Which structural promise a constraint set carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    General,
    Affine,
    Holonomic,
}

/// `n` constraint functions on the extended phase space of an
/// `m`-dimensional system.
#[derive(Clone)]
pub struct ConstraintSet {
    m: usize,
    phi: Option<Arc<dyn SmoothMap>>,
    structure: Structure,
}

impl std::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("m", &self.m)
            .field("n", &self.count())
            .field("structure", &self.kind())
            .finish()
    }
}

impl ConstraintSet {
    /// No constraints at all (`n = 0`).
    pub fn empty(m: usize) -> Self {
        Self {
            m,
            phi: None,
            structure: Structure::General,
        }
    }

    pub fn general(m: usize, phi: Arc<dyn SmoothMap>) -> Result<Self> {
        Self::checked(m, phi, Structure::General)
    }

    /// Constraint promised to satisfy `φ ≡ a(t, x) + A(t, x) v`; the velocity
    /// Jacobian is taken from `A` directly.
    pub fn affine(m: usize, phi: Arc<dyn SmoothMap>, parts: Arc<dyn AffineParts>) -> Result<Self> {
        Self::checked(m, phi, Structure::Affine(parts))
    }

    fn checked(m: usize, phi: Arc<dyn SmoothMap>, structure: Structure) -> Result<Self> {
        if phi.dim() == 0 {
            return Ok(Self::empty(m));
        }
        if phi.dim() >= m {
            return Err(Error::Config(format!(
                "need fewer constraints than coordinates (n = {}, m = {m})",
                phi.dim()
            )));
        }
        Ok(Self {
            m,
            phi: Some(phi),
            structure,
        })
    }

    /// Differential constraint `φ = g_t + g_x v` generated by a geometric
    /// constraint `g(t, x) = 0`. The lift's `t`/`x` derivatives fall back to
    /// central differences of `g`'s first derivatives.
    pub fn lift_holonomic(m: usize, g: Arc<dyn SmoothMap>) -> Result<Self> {
        Self::lift(m, g, None)
    }

    /// As [`ConstraintSet::lift_holonomic`] with closed-form curvature terms.
    pub fn lift_holonomic_with(m: usize, g: Arc<dyn SmoothMap>, curvature: Arc<dyn LiftCurvature>) -> Result<Self> {
        Self::lift(m, g, Some(curvature))
    }

    fn lift(m: usize, g: Arc<dyn SmoothMap>, curvature: Option<Arc<dyn LiftCurvature>>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let mut draw = || rng.gen_range(-2.0..2.0);
            let s = State {
                t: draw(),
                x: DVector::from_fn(m, |_, _| draw()),
                v: DVector::from_fn(m, |_, _| draw()),
            };
            // probes outside g's domain are skipped
            if let Ok(gv) = g.d_v(&s) {
                if gv.iter().all(|c| c.is_finite()) {
                    worst = worst.max(linalg::amax(&gv));
                }
            }
        }
        if worst > 1e-10 {
            return Err(Error::VelocityDependent(worst));
        }
        let lift = Arc::new(HolonomicLift {
            g: g.clone(),
            curvature,
        });
        Self::checked(m, lift, Structure::Holonomic(g))
    }

    /// Configuration dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Constraint count `n`.
    pub fn count(&self) -> usize {
        self.phi.as_ref().map_or(0, |p| p.dim())
    }

    /// Degrees of freedom `m − n`.
    pub fn degrees_of_freedom(&self) -> usize {
        self.m - self.count()
    }

    pub fn kind(&self) -> StructureKind {
        match self.structure {
            Structure::General => StructureKind::General,
            Structure::Affine(_) => StructureKind::Affine,
            Structure::Holonomic(_) => StructureKind::Holonomic,
        }
    }

    pub fn is_holonomic(&self) -> bool {
        self.kind() == StructureKind::Holonomic
    }

    /// φ is affine in velocity, either by declaration or as a holonomic lift.
    pub fn is_affine_in_velocity(&self) -> bool {
        self.count() == 0 || self.kind() != StructureKind::General
    }

    /// The geometric generator `g` of a holonomic lift.
    pub fn generator(&self) -> Option<&Arc<dyn SmoothMap>> {
        match &self.structure {
            Structure::Holonomic(g) => Some(g),
            _ => None,
        }
    }

    pub fn phi(&self) -> Option<&Arc<dyn SmoothMap>> {
        self.phi.as_ref()
    }

    fn check_state(&self, s: &State) -> Result<()> {
        ensure_len("state dimension", self.m, s.dim())
    }

    /// `φ(t, x, v)`.
    pub fn eval(&self, s: &State) -> Result<DVector<f64>> {
        self.check_state(s)?;
        match &self.phi {
            None => Ok(DVector::zeros(0)),
            Some(phi) => {
                let out = phi.value(s);
                ensure_len("constraint output", phi.dim(), out.len())?;
                Ok(out)
            }
        }
    }

    /// `(φ_t, φ_x, φ_v)` with provenance.
    pub fn jacobians(&self, s: &State) -> Result<ConstraintJacobians> {
        self.check_state(s)?;
        let Some(phi) = &self.phi else {
            return Ok(ConstraintJacobians {
                phi_t: DVector::zeros(0),
                phi_x: DMatrix::zeros(0, self.m),
                phi_v: DMatrix::zeros(0, self.m),
                provenance: Provenance::Analytic,
            });
        };
        let n = phi.dim();
        let phi_t = phi.d_t(s)?;
        let phi_x = phi.d_x(s)?;
        let phi_v = match &self.structure {
            Structure::Affine(parts) => parts.matrix(s.t, &s.x),
            _ => phi.d_v(s)?,
        };
        ensure_len("φ_t rows", n, phi_t.len())?;
        ensure_len("φ_x shape", n * self.m, phi_x.nrows() * phi_x.ncols())?;
        ensure_len("φ_v shape", n * self.m, phi_v.nrows() * phi_v.ncols())?;
        Ok(ConstraintJacobians {
            phi_t,
            phi_x,
            phi_v,
            provenance: phi.provenance(),
        })
    }

    /// Rank test on `φ_v` with threshold `tol · max(1, ‖φ_v‖₂)`.
    pub fn regularity(&self, s: &State, tol: f64) -> Result<Regularity> {
        let jac = self.jacobians(s)?;
        Ok(Regularity::of(&jac.phi_v, tol))
    }

    /// Orthonormal basis of the virtual displacements `ker φ_v` at `s`.
    pub fn virtual_basis(&self, s: &State) -> Result<VirtualBasis> {
        let jac = self.jacobians(s)?;
        VirtualBasis::from_jacobian(&jac.phi_v, s)
    }

    /// `(‖g‖_∞, ‖g_t + g_x v‖_∞)` for a holonomic lift.
    pub fn manifold_residual(&self, s: &State) -> Result<ManifoldResidual> {
        self.check_state(s)?;
        let g = self.generator().ok_or(Error::NotHolonomic("manifold_residual"))?;
        let g_norm = g.value(s).amax();
        let lifted = g.d_t(s)? + g.d_x(s)? * &s.v;
        Ok(ManifoldResidual {
            g_norm,
            gdot_norm: lifted.amax(),
        })
    }

    /// Largest deviation of φ from `a + A v` at the given probes, for
    /// affine-tagged sets.
    pub fn affine_deviation(&self, probes: &[State]) -> Result<f64> {
        let Structure::Affine(parts) = &self.structure else {
            return Err(Error::Config("constraint set is not tagged affine".into()));
        };
        let mut worst = 0.0f64;
        for s in probes {
            let phi = self.eval(s)?;
            let model = parts.offset(s.t, &s.x) + parts.matrix(s.t, &s.x) * &s.v;
            worst = worst.max((phi - model).amax());
        }
        Ok(worst)
    }
}

/// Verdict of the rank condition at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub sigma_min: f64,
    pub threshold: f64,
}

impl Regularity {
    pub fn of(phi_v: &DMatrix<f64>, tol: f64) -> Self {
        let sv = linalg::singular_values(phi_v);
        let norm = sv.first().copied().unwrap_or(0.0);
        Self {
            sigma_min: sv.last().copied().unwrap_or(f64::INFINITY),
            threshold: tol * norm.max(1.0),
        }
    }

    pub fn passed(&self) -> bool {
        self.sigma_min > self.threshold
    }

    pub(crate) fn into_result(self, t: f64) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Regularity {
                t,
                sigma_min: self.sigma_min,
                threshold: self.threshold,
            })
        }
    }
}

/// Columns span `ker φ_v` at `state`.
#[derive(Debug, Clone)]
pub struct VirtualBasis {
    pub xi: DMatrix<f64>,
    pub state: State,
}

impl VirtualBasis {
    pub fn from_jacobian(phi_v: &DMatrix<f64>, s: &State) -> Result<Self> {
        Regularity::of(phi_v, RANK_TOL).into_result(s.t)?;
        Ok(Self {
            xi: linalg::kernel_basis(phi_v),
            state: s.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.xi.ncols()
    }
}

/// Defining residuals of the invariant manifold
/// `W = {g = 0, g_t + g_x v = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldResidual {
    pub g_norm: f64,
    pub gdot_norm: f64,
}

struct HolonomicLift {
    g: Arc<dyn SmoothMap>,
    curvature: Option<Arc<dyn LiftCurvature>>,
}

impl SmoothMap for HolonomicLift {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn value(&self, s: &State) -> DVector<f64> {
        match (self.g.d_t(s), self.g.d_x(s)) {
            (Ok(gt), Ok(gx)) => gt + gx * &s.v,
            _ => DVector::from_element(self.g.dim(), f64::NAN),
        }
    }

    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        match &self.curvature {
            Some(c) => Ok(c.lift_d_t(s)),
            None => Ok(crate::model::fd_jacobian(self, s, crate::Slot::T)?.column(0).into_owned()),
        }
    }

    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        match &self.curvature {
            Some(c) => Ok(c.lift_d_x(s)),
            None => crate::model::fd_jacobian(self, s, crate::Slot::X),
        }
    }

    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        self.g.d_x(s)
    }

    fn provenance(&self) -> Provenance {
        match (&self.curvature, self.g.provenance()) {
            (Some(_), Provenance::Analytic) => Provenance::Analytic,
            _ => Provenance::FiniteDifference,
        }
    }
}
