//! Ideal constraint reactions `N = Λ φ_v` with
//! `Λᵀ = −(φ_v G⁻¹ φ_vᵀ)⁻¹ (φ_t + φ_x v + φ_v G⁻¹ fᵀ)`, non-ideal
//! realizations through a user matrix `S`, and invariance of `N` under
//! reparametrization `ψ = U(t, x, v, φ)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{self, Execution};
use crate::constraints::{ConstraintJacobians, ConstraintSet, Regularity, VirtualBasis, RANK_TOL};
use crate::error::{ensure_len, Error, Result};
use crate::model::{MassMatrix, MechanicalSystem, Provenance, SmoothMap, State};

/// Multipliers, reaction covector and gram matrix at one state.
#[derive(Debug, Clone)]
pub struct ReactionResult {
    /// `Λ = (λ₁, …, λ_n)`.
    pub multipliers: DVector<f64>,
    /// `N`, length `m`.
    pub reaction: DVector<f64>,
    /// `φ_v G⁻¹ φ_vᵀ`, or `φ_v G⁻¹ Sᵀ` for a realization.
    pub gram: DMatrix<f64>,
    pub state: State,
}

/// `φ_v G⁻¹ φ_vᵀ` at `s`; fails when the rank condition does not hold.
pub fn gram_matrix(cs: &ConstraintSet, mass: &MassMatrix, s: &State) -> Result<DMatrix<f64>> {
    let jac = cs.jacobians(s)?;
    Regularity::of(&jac.phi_v, RANK_TOL).into_result(s.t)?;
    Ok(gram_of(&jac.phi_v, mass))
}

fn gram_of(phi_v: &DMatrix<f64>, mass: &MassMatrix) -> DMatrix<f64> {
    let ginv_phi_vt = mass.solve_matrix(&phi_v.transpose());
    let gram = phi_v * ginv_phi_vt;
    // symmetrize the rounding so the Cholesky sees an exactly symmetric matrix
    (&gram + gram.transpose()) * 0.5
}

/// `φ_t + φ_x v + φ_v G⁻¹ fᵀ`: the drift of φ along the free dynamics.
fn free_drift(jac: &ConstraintJacobians, mass: &MassMatrix, s: &State, f: &DVector<f64>) -> DVector<f64> {
    &jac.phi_t + &jac.phi_x * &s.v + &jac.phi_v * mass.solve(f)
}

pub fn multipliers(sys: &MechanicalSystem, cs: &ConstraintSet, s: &State) -> Result<DVector<f64>> {
    Ok(reaction(sys, cs, s)?.multipliers)
}

/// Ideal reaction at `s`.
pub fn reaction(sys: &MechanicalSystem, cs: &ConstraintSet, s: &State) -> Result<ReactionResult> {
    ensure_len("constraint dimension", sys.dim(), cs.dim())?;
    let jac = cs.jacobians(s)?;
    let f = sys.force.value(s);
    reaction_from_parts(&sys.mass, &jac, s, &f)
}

pub(crate) fn reaction_from_parts(
    mass: &MassMatrix,
    jac: &ConstraintJacobians,
    s: &State,
    f: &DVector<f64>,
) -> Result<ReactionResult> {
    let m = s.dim();
    if jac.phi_v.nrows() == 0 {
        return Ok(ReactionResult {
            multipliers: DVector::zeros(0),
            reaction: DVector::zeros(m),
            gram: DMatrix::zeros(0, 0),
            state: s.clone(),
        });
    }
    let regularity = Regularity::of(&jac.phi_v, RANK_TOL);
    regularity.into_result(s.t)?;
    let gram = gram_of(&jac.phi_v, mass);
    let chol = Cholesky::new(gram.clone()).ok_or(Error::Singular {
        what: "gram matrix".into(),
        t: s.t,
        sigma_min: regularity.sigma_min,
    })?;
    let lambda = -chol.solve(&free_drift(jac, mass, s, f));
    let reaction = jac.phi_v.tr_mul(&lambda);
    Ok(ReactionResult {
        multipliers: lambda,
        reaction,
        gram,
        state: s.clone(),
    })
}

type RealizationFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

/// Rows of `S(t, x, v)` define an alternative space of virtual
/// displacements `{ξ : S ξ = 0}` along which the reaction does no work.
#[derive(Clone)]
pub struct Realization {
    rows: usize,
    cols: usize,
    s: RealizationFn,
}

impl Realization {
    pub fn new(rows: usize, cols: usize, s: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        Self {
            rows,
            cols,
            s: Arc::new(s),
        }
    }

    /// `S = φ_v`, which reproduces the ideal reaction.
    pub fn ideal(cs: &ConstraintSet) -> Self {
        let cs = cs.clone();
        Self::new(cs.count(), cs.dim(), move |s| {
            cs.jacobians(s)
                .map(|j| j.phi_v)
                .unwrap_or_else(|_| DMatrix::from_element(cs.count(), cs.dim(), f64::NAN))
        })
    }

    pub fn matrix(&self, s: &State) -> Result<DMatrix<f64>> {
        let out = (self.s)(s);
        ensure_len("realization rows", self.rows, out.nrows())?;
        ensure_len("realization columns", self.cols, out.ncols())?;
        Ok(out)
    }
}

/// Reaction `N_S = Λ_S S` with
/// `Λ_Sᵀ = −(φ_v G⁻¹ Sᵀ)⁻¹ (φ_t + φ_x v + φ_v G⁻¹ fᵀ)`.
pub fn reaction_with_realization(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    real: &Realization,
    s: &State,
) -> Result<ReactionResult> {
    ensure_len("constraint dimension", sys.dim(), cs.dim())?;
    let jac = cs.jacobians(s)?;
    let f = sys.force.value(s);
    realized_from_parts(&sys.mass, &jac, real, s, &f)
}

pub(crate) fn realized_from_parts(
    mass: &MassMatrix,
    jac: &ConstraintJacobians,
    real: &Realization,
    s: &State,
    f: &DVector<f64>,
) -> Result<ReactionResult> {
    let n = jac.phi_v.nrows();
    ensure_len("realization rows", n, real.rows)?;
    if n == 0 {
        return reaction_from_parts(mass, jac, s, f);
    }
    let smat = real.matrix(s)?;
    let coupling = &jac.phi_v * mass.solve_matrix(&smat.transpose());
    let check = Regularity::of(&coupling, RANK_TOL);
    let singular = || Error::Singular {
        what: "φ_v G⁻¹ Sᵀ".into(),
        t: s.t,
        sigma_min: check.sigma_min,
    };
    if !check.passed() {
        return Err(singular());
    }
    let lambda = -coupling.clone().lu().solve(&free_drift(jac, mass, s, f)).ok_or_else(singular)?;
    let reaction = smat.tr_mul(&lambda);
    Ok(ReactionResult {
        multipliers: lambda,
        reaction,
        gram: coupling,
        state: s.clone(),
    })
}

/// `U(t, x, v, z)` with `U = 0 ⇔ z = 0` and `U_z(t, x, v, 0)` invertible.
/// Derivatives default to central differences.
pub trait Reparametrization: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, s: &State, z: &DVector<f64>) -> DVector<f64>;

    fn d_z(&self, s: &State, z: &DVector<f64>) -> DMatrix<f64> {
        fd_columns(self.dim(), z.len(), |j| z[j], |j, c| {
            let mut zc = z.clone();
            zc[j] = c;
            self.value(s, &zc)
        })
    }

    fn d_t(&self, s: &State, z: &DVector<f64>) -> DVector<f64> {
        let col = fd_columns(self.dim(), 1, |_| s.t, |_, c| {
            let mut sc = s.clone();
            sc.t = c;
            self.value(&sc, z)
        });
        col.column(0).into_owned()
    }

    fn d_x(&self, s: &State, z: &DVector<f64>) -> DMatrix<f64> {
        fd_columns(self.dim(), s.dim(), |j| s.x[j], |j, c| {
            let mut sc = s.clone();
            sc.x[j] = c;
            self.value(&sc, z)
        })
    }

    fn d_v(&self, s: &State, z: &DVector<f64>) -> DMatrix<f64> {
        fd_columns(self.dim(), s.dim(), |j| s.v[j], |j, c| {
            let mut sc = s.clone();
            sc.v[j] = c;
            self.value(&sc, z)
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
}

/// Central differences column by column; `eval(j, c)` evaluates with
/// coordinate `j` set to `c`.
fn fd_columns(
    rows: usize,
    cols: usize,
    coord: impl Fn(usize) -> f64,
    eval: impl Fn(usize, f64) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let c = coord(j);
        let h = crate::model::fd_step(c);
        let (fp, fm) = (eval(j, c + h), eval(j, c - h));
        out.set_column(j, &((fp - fm) / ((c + h) - (c - h))));
    }
    out
}

/// `U(z) = z`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityReparam {
    pub dim: usize,
}

/// `U(z) = eᶻ − 1`, componentwise.
#[derive(Debug, Clone, Copy)]
pub struct ExpMinusOne {
    pub dim: usize,
}

/// `U(z) = z + z³`, componentwise.
#[derive(Debug, Clone, Copy)]
pub struct CubicReparam {
    pub dim: usize,
}

/// `U(z) = M z` with constant invertible `M`.
#[derive(Debug, Clone)]
pub struct LinearMix {
    pub matrix: DMatrix<f64>,
}

impl LinearMix {
    /// Random well-conditioned mix: identity plus a small random part.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.4..0.4));
        let scale = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Self {
            matrix: (DMatrix::identity(n, n) + noise) * scale,
        }
    }
}

macro_rules! componentwise_reparam {
    ($ty:ty, |$z:ident| $value:expr, |$dz:ident| $deriv:expr) => {
        impl Reparametrization for $ty {
            fn dim(&self) -> usize {
                self.dim
            }
            fn value(&self, _s: &State, z: &DVector<f64>) -> DVector<f64> {
                z.map(|$z| $value)
            }
            fn d_z(&self, _s: &State, z: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_diagonal(&z.map(|$dz| $deriv))
            }
            fn d_t(&self, _s: &State, _z: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(self.dim)
            }
            fn d_x(&self, s: &State, _z: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(self.dim, s.dim())
            }
            fn d_v(&self, s: &State, _z: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(self.dim, s.dim())
            }
            fn provenance(&self) -> Provenance {
                Provenance::Analytic
            }
        }
    };
}

componentwise_reparam!(IdentityReparam, |z| z, |_z| 1.0);
componentwise_reparam!(ExpMinusOne, |z| z.exp_m1(), |z| z.exp());
componentwise_reparam!(CubicReparam, |z| z + z * z * z, |z| 1.0 + 3.0 * z * z);

impl Reparametrization for LinearMix {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn value(&self, _s: &State, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z
    }
    fn d_z(&self, _s: &State, _z: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn d_t(&self, _s: &State, _z: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
    fn d_x(&self, s: &State, _z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), s.dim())
    }
    fn d_v(&self, s: &State, _z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), s.dim())
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// `ψ(t, x, v) = U(t, x, v, φ(t, x, v))` with chain-rule derivatives.
struct Reparametrized {
    inner: ConstraintSet,
    rep: Arc<dyn Reparametrization>,
}

impl Reparametrized {
    fn parts(&self, s: &State) -> Result<(DVector<f64>, ConstraintJacobians, DMatrix<f64>)> {
        let z = self.inner.eval(s)?;
        let jac = self.inner.jacobians(s)?;
        let u_z = self.rep.d_z(s, &z);
        Ok((z, jac, u_z))
    }
}

impl SmoothMap for Reparametrized {
    fn dim(&self) -> usize {
        self.rep.dim()
    }

    fn value(&self, s: &State) -> DVector<f64> {
        match self.inner.eval(s) {
            Ok(z) => self.rep.value(s, &z),
            Err(_) => DVector::from_element(self.rep.dim(), f64::NAN),
        }
    }

    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        let (z, jac, u_z) = self.parts(s)?;
        Ok(self.rep.d_t(s, &z) + u_z * jac.phi_t)
    }

    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        let (z, jac, u_z) = self.parts(s)?;
        Ok(self.rep.d_x(s, &z) + u_z * jac.phi_x)
    }

    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        let (z, jac, u_z) = self.parts(s)?;
        Ok(self.rep.d_v(s, &z) + u_z * jac.phi_v)
    }

    fn provenance(&self) -> Provenance {
        match (self.inner.phi().map(|p| p.provenance()), self.rep.provenance()) {
            (Some(Provenance::Analytic), Provenance::Analytic) => Provenance::Analytic,
            _ => Provenance::FiniteDifference,
        }
    }
}

/// Replace `φ = 0` by `ψ = U(t, x, v, φ) = 0`. `U(·, 0) = 0` and the
/// invertibility of `U_z(·, 0)` are checked at deterministic probe states.
pub fn reparametrize(cs: &ConstraintSet, rep: Arc<dyn Reparametrization>) -> Result<ConstraintSet> {
    let n = cs.count();
    ensure_len("reparametrization dimension", n, rep.dim())?;
    if n == 0 {
        return Ok(cs.clone());
    }
    let m = cs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let zero = DVector::zeros(n);
    for _ in 0..8 {
        let mut draw = || rng.gen_range(-2.0..2.0);
        let s = State {
            t: draw(),
            x: DVector::from_fn(m, |_, _| draw()),
            v: DVector::from_fn(m, |_, _| draw()),
        };
        let at_zero = rep.value(&s, &zero).amax();
        if at_zero > 1e-12 {
            return Err(Error::BadReparametrization(format!("|U(·, 0)| = {at_zero:e}")));
        }
        let u_z = rep.d_z(&s, &zero);
        let check = Regularity::of(&u_z, RANK_TOL);
        if !check.passed() {
            return Err(Error::BadReparametrization(format!(
                "U_z(·, 0) singular (σ_min = {:e})",
                check.sigma_min
            )));
        }
    }
    ConstraintSet::general(
        m,
        Arc::new(Reparametrized {
            inner: cs.clone(),
            rep,
        }),
    )
}

/// Tolerance on `‖φ‖_∞` for a state to count as on the constraint manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-10;

/// Largest `‖N_φ − N_ψ‖_∞` over on-manifold states, where `ψ` is the
/// reparametrized constraint set.
pub fn invariance_report(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    rep: Arc<dyn Reparametrization>,
    states: &[State],
) -> Result<f64> {
    invariance_report_with(sys, cs, rep, states, Execution::default())
}

pub fn invariance_report_with(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    rep: Arc<dyn Reparametrization>,
    states: &[State],
    exec: Execution,
) -> Result<f64> {
    let psi = reparametrize(cs, rep)?;
    let diffs = batch::try_map(exec, states, |s| {
        let phi = cs.eval(s)?.amax();
        if phi > ON_MANIFOLD_TOL {
            return Err(Error::OffManifold {
                residual: "phi",
                value: phi,
                tol: ON_MANIFOLD_TOL,
            });
        }
        let a = reaction(sys, cs, s)?;
        let b = reaction(sys, &psi, s)?;
        Ok((a.reaction - b.reaction).amax())
    })?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}

/// `max_ξ |N · ξ|` over the columns of the basis.
pub fn virtual_work(res: &ReactionResult, basis: &VirtualBasis) -> Result<f64> {
    if res.state != basis.state {
        return Err(Error::StateMismatch);
    }
    if basis.xi.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(basis.xi.tr_mul(&res.reaction).amax())
}
