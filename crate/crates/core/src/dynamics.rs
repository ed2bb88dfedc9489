//! Lagrange equations of the first kind `G ẍ = fᵀ + Nᵀ`: accelerations,
//! integration with per-sample diagnostics, the general equation of dynamics
//! and optional projection onto the invariant manifold.

use std::io::Write;

use nalgebra::{Cholesky, DVector};

use crate::constraints::{ConstraintSet, StructureKind, VirtualBasis};
use crate::error::{ensure_len, Error, Result};
use crate::integrate::{self, IntegratorConfig, Projection};
use crate::linalg;
use crate::model::{MassMatrix, MechanicalSystem, State};
use crate::reactions::{self, Realization, ReactionResult};

/// How the reaction is realized.
#[derive(Clone, Default)]
pub enum ReactionModel {
    #[default]
    Ideal,
    Realized(Realization),
}

/// Residuals and energy recorded at an accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `‖g‖_∞`, holonomic sets only.
    pub g_norm: Option<f64>,
    pub phi_norm: f64,
    /// `‖φ_t + φ_x v + φ_v ẍ‖_∞`, the chain-rule rate of φ.
    pub phi_rate: f64,
    pub gde_residual: f64,
    pub kinetic: f64,
    pub potential: Option<f64>,
}

impl Diagnostics {
    /// `T + V` when the force is potential, `T` otherwise.
    pub fn energy(&self) -> f64 {
        self.kinetic + self.potential.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub state: State,
    pub acceleration: DVector<f64>,
    pub reaction: ReactionResult,
    pub diagnostics: Diagnostics,
}

/// Accepted samples of a first-kind integration, strictly increasing in `t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub dim: usize,
    pub constraints: usize,
    pub projection: Projection,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_by(&self, f: impl Fn(&Diagnostics) -> f64) -> f64 {
        self.samples.iter().map(|s| f(&s.diagnostics)).fold(0.0, f64::max)
    }

    pub fn max_phi(&self) -> f64 {
        self.max_by(|d| d.phi_norm)
    }

    pub fn max_g(&self) -> Option<f64> {
        self.samples
            .iter()
            .map(|s| s.diagnostics.g_norm)
            .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))
    }

    /// Largest `|E(t) − E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        let e0 = first.diagnostics.energy();
        self.max_by(|d| (d.energy() - e0).abs())
    }

    /// CSV with header
    /// `t,x1..xm,v1..vm,lambda1..lambdan,N1..Nm,g_norm,phi_norm,gde_residual,energy`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let (m, n) = (self.dim, self.constraints);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("v{i}")));
        header.extend((1..=n).map(|i| format!("lambda{i}")));
        header.extend((1..=m).map(|i| format!("N{i}")));
        header.extend(["g_norm", "phi_norm", "gde_residual", "energy"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let d = &s.diagnostics;
            let mut row = vec![fmt_num(s.state.t)];
            row.extend(s.state.x.iter().map(|&c| fmt_num(c)));
            row.extend(s.state.v.iter().map(|&c| fmt_num(c)));
            row.extend(s.reaction.multipliers.iter().map(|&c| fmt_num(c)));
            row.extend(s.reaction.reaction.iter().map(|&c| fmt_num(c)));
            row.push(d.g_norm.map(fmt_num).unwrap_or_default());
            row.push(fmt_num(d.phi_norm));
            row.push(fmt_num(d.gde_residual));
            row.push(fmt_num(d.energy()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, `.` separator.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `ẍ = G⁻¹(fᵀ + Nᵀ)` with the ideal reaction.
pub fn acceleration(sys: &MechanicalSystem, cs: &ConstraintSet, s: &State) -> Result<DVector<f64>> {
    Ok(acceleration_with(sys, cs, &ReactionModel::Ideal, s)?.0)
}

pub fn acceleration_with(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    model: &ReactionModel,
    s: &State,
) -> Result<(DVector<f64>, ReactionResult)> {
    ensure_len("constraint dimension", sys.dim(), cs.dim())?;
    ensure_len("state dimension", sys.dim(), s.dim())?;
    let jac = cs.jacobians(s)?;
    let f = sys.force.value(s);
    let res = match model {
        ReactionModel::Ideal => reactions::reaction_from_parts(&sys.mass, &jac, s, &f)?,
        ReactionModel::Realized(real) => reactions::realized_from_parts(&sys.mass, &jac, real, s, &f)?,
    };
    let xdd = sys.mass.solve(&(f + &res.reaction));
    Ok((xdd, res))
}

/// `(T, V)` with `T = ½ vᵀ G v`; `V` only for potential forces.
pub fn energy(sys: &MechanicalSystem, s: &State) -> (f64, Option<f64>) {
    (sys.mass.kinetic_energy(&s.v), sys.force.potential(s.t, &s.x))
}

/// `max_ξ |(ẍᵀ G − f) ξ|` over an orthonormal basis of virtual displacements.
pub fn gde_residual(sys: &MechanicalSystem, cs: &ConstraintSet, s: &State, xdd: &DVector<f64>) -> Result<f64> {
    ensure_len("acceleration", sys.dim(), xdd.len())?;
    let basis = cs.virtual_basis(s)?;
    Ok(gde_with_basis(sys, s, xdd, &basis))
}

fn gde_with_basis(sys: &MechanicalSystem, s: &State, xdd: &DVector<f64>, basis: &VirtualBasis) -> f64 {
    let covector = sys.mass.matrix() * xdd - sys.force.value(s);
    if basis.xi.ncols() == 0 {
        return 0.0;
    }
    basis.xi.tr_mul(&covector).amax()
}

/// Chain-rule rate `φ_t + φ_x v + φ_v ẍ` of the constraints along a motion
/// with acceleration `xdd`.
pub fn constraint_rate(cs: &ConstraintSet, s: &State, xdd: &DVector<f64>) -> Result<DVector<f64>> {
    let jac = cs.jacobians(s)?;
    Ok(jac.phi_t + jac.phi_x * &s.v + jac.phi_v * xdd)
}

pub fn diagnostics(sys: &MechanicalSystem, cs: &ConstraintSet, s: &State, xdd: &DVector<f64>) -> Result<Diagnostics> {
    let phi_norm = cs.eval(s)?.amax();
    let g_norm = cs.generator().map(|g| g.value(s).amax());
    let (kinetic, potential) = energy(sys, s);
    Ok(Diagnostics {
        g_norm,
        phi_norm,
        phi_rate: constraint_rate(cs, s, xdd)?.amax(),
        gde_residual: gde_residual(sys, cs, s, xdd)?,
        kinetic,
        potential,
    })
}

/// Tolerance on the initial residuals `‖φ‖` and `‖g‖`.
pub const INITIAL_TOL: f64 = 1e-8;

pub fn integrate_first_kind(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    init: &State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_first_kind_with(sys, cs, &ReactionModel::Ideal, init, t_end, cfg)
}

pub fn integrate_first_kind_with(
    sys: &MechanicalSystem,
    cs: &ConstraintSet,
    model: &ReactionModel,
    init: &State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    ensure_len("initial state", sys.dim(), init.dim())?;
    check_initial(cs, init)?;
    match (cfg.projection, cs.kind()) {
        (Projection::Off, _) => {}
        (_, StructureKind::Holonomic) => {}
        _ if cs.count() == 0 => {}
        _ => return Err(Error::NotHolonomic("positional projection")),
    }

    let m = sys.dim();
    let rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let s = State::from_phase(t, y);
        let (xdd, _) = acceleration_with(sys, cs, model, &s)?;
        let mut dy = DVector::zeros(2 * m);
        dy.rows_mut(0, m).copy_from(&s.v);
        dy.rows_mut(m, m).copy_from(&xdd);
        Ok(dy)
    };

    let mut samples = Vec::new();
    let mut record = |s: State| -> Result<()> {
        let (xdd, reaction) = acceleration_with(sys, cs, model, &s)?;
        let diagnostics = diagnostics(sys, cs, &s, &xdd)?;
        samples.push(Sample {
            state: s,
            acceleration: xdd,
            reaction,
            diagnostics,
        });
        Ok(())
    };
    record(init.clone())?;
    integrate::drive(cfg, &rhs, init.t, init.phase(), t_end, |t, y| {
        let mut s = State::from_phase(t, &y);
        if !s.is_finite() {
            return Err(Error::StepFailure { t, h: cfg.dt });
        }
        if cfg.projection != Projection::Off && cs.count() > 0 {
            let with_velocity = cfg.projection == Projection::PositionalVelocity;
            s = project(&s, cs, &sys.mass, cfg.projection_tol, cfg.projection_max_iter, with_velocity)?.state;
        }
        let y = s.phase();
        record(s)?;
        Ok(y)
    })?;

    Ok(Trajectory {
        samples,
        dim: m,
        constraints: cs.count(),
        projection: cfg.projection,
    })
}

fn check_initial(cs: &ConstraintSet, s: &State) -> Result<()> {
    let phi = cs.eval(s)?.amax();
    if !(phi <= INITIAL_TOL) {
        return Err(Error::OffManifold {
            residual: "phi",
            value: phi,
            tol: INITIAL_TOL,
        });
    }
    if let Some(g) = cs.generator() {
        let gn = g.value(s).amax();
        if !(gn <= INITIAL_TOL) {
            return Err(Error::OffManifold {
                residual: "g",
                value: gn,
                tol: INITIAL_TOL,
            });
        }
    }
    Ok(())
}

/// Result of [`project_to_manifold`].
#[derive(Debug, Clone)]
pub struct Projected {
    pub state: State,
    /// Gauss–Newton iterations spent on the position.
    pub iterations: usize,
}

/// Move `s` onto `W = {g = 0, g_t + g_x v = 0}`: Gauss–Newton on `g(t, x) = 0`
/// with the `G`-weighted minimal correction
/// `Δx = −G⁻¹g_xᵀ (g_x G⁻¹ g_xᵀ)⁻¹ g`, then the `G`-orthogonal projection
/// of `v` onto `{g_x v = −g_t}`.
pub fn project_to_manifold(s: &State, cs: &ConstraintSet, mass: &MassMatrix, tol: f64, max_iter: usize) -> Result<Projected> {
    project(s, cs, mass, tol, max_iter, true)
}

fn project(
    s: &State,
    cs: &ConstraintSet,
    mass: &MassMatrix,
    tol: f64,
    max_iter: usize,
    with_velocity: bool,
) -> Result<Projected> {
    let g = cs.generator().ok_or(Error::NotHolonomic("project_to_manifold"))?;
    let mut out = s.clone();
    let mut iterations = 0;
    let mut residual = g.value(&out);
    while residual.amax() > tol {
        if iterations == max_iter || !residual.iter().all(|c| c.is_finite()) {
            return Err(Error::ProjectionDiverged {
                iterations,
                residual: residual.amax(),
            });
        }
        let gx = g.d_x(&out)?;
        out.x -= weighted_correction(mass, &gx, &residual, out.t)?;
        residual = g.value(&out);
        iterations += 1;
    }
    if with_velocity {
        let mut passes = 0;
        let mut lifted = cs.eval(&out)?;
        while lifted.amax() > tol {
            if passes == max_iter {
                return Err(Error::ProjectionDiverged {
                    iterations: passes,
                    residual: lifted.amax(),
                });
            }
            let gx = g.d_x(&out)?;
            out.v -= weighted_correction(mass, &gx, &lifted, out.t)?;
            lifted = cs.eval(&out)?;
            passes += 1;
        }
    }
    Ok(Projected { state: out, iterations })
}

/// `G⁻¹ Jᵀ (J G⁻¹ Jᵀ)⁻¹ r`.
fn weighted_correction(
    mass: &MassMatrix,
    jac: &nalgebra::DMatrix<f64>,
    r: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let ginv_jt = mass.solve_matrix(&jac.transpose());
    let gram = jac * &ginv_jt;
    let chol = Cholesky::new(gram).ok_or(Error::Singular {
        what: "projection gram".into(),
        t,
        sigma_min: linalg::sigma_min(jac),
    })?;
    Ok(ginv_jt * chol.solve(r))
}
