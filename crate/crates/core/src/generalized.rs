//! Holonomic systems in generalized coordinates: embeddings `x = u(t, y)`,
//! the pullback Lagrangian `L = T₂ + T₁ + T₀`, generalized forces, the
//! Lagrangian derivative, second-kind integration and the comparison with
//! first-kind trajectories.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::batch::{self, Execution};
use crate::dynamics::{fmt_num, Trajectory};
use crate::error::{ensure_len, Error, Result};
use crate::integrate::{self, IntegratorConfig};
use crate::model::{check_spd, fd_step, ForceField, MassMatrix, MechanicalSystem, Provenance, State};

/// A chart `u(t, ·): Y → ℝᵐ` of the configuration manifold with its first
/// and second derivatives. Second derivatives default to central differences
/// of the first.
pub trait Embedding: Send + Sync {
    fn ambient_dim(&self) -> usize;

    /// `r = m − n`.
    fn dim(&self) -> usize;

    fn in_domain(&self, _t: f64, _y: &DVector<f64>) -> bool {
        true
    }

    fn position(&self, t: f64, y: &DVector<f64>) -> DVector<f64>;

    fn d_t(&self, t: f64, y: &DVector<f64>) -> DVector<f64>;

    /// `u_y`, `m×r`.
    fn d_y(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64>;

    fn d_tt(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let h = fd_step(t);
        (self.d_t(t + h, y) - self.d_t(t - h, y)) / ((t + h) - (t - h))
    }

    /// `u_ty = ∂_t u_y`, `m×r`.
    fn d_ty(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        let h = fd_step(t);
        (self.d_y(t + h, y) - self.d_y(t - h, y)) / ((t + h) - (t - h))
    }

    /// Entry `k` is `∂u_y/∂yᵏ` (`m×r`).
    fn d_yy(&self, t: f64, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.dim())
            .map(|k| {
                let h = fd_step(y[k]);
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[k] += h;
                ym[k] -= h;
                (self.d_y(t, &yp) - self.d_y(t, &ym)) / (yp[k] - ym[k])
            })
            .collect()
    }

    fn provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
}

/// `(t, y, ẏ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub t: f64,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
}

impl GeneralizedState {
    pub fn from_slices(t: f64, y: &[f64], w: &[f64]) -> Result<Self> {
        ensure_len("generalized velocity", y.len(), w.len())?;
        Ok(Self {
            t,
            y: DVector::from_column_slice(y),
            w: DVector::from_column_slice(w),
        })
    }
}

/// Second-order jet `(t, y, ẏ, ÿ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub t: f64,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub a: DVector<f64>,
}

fn check_domain(emb: &dyn Embedding, t: f64, y: &DVector<f64>) -> Result<()> {
    ensure_len("generalized coordinates", emb.dim(), y.len())?;
    if emb.in_domain(t, y) {
        Ok(())
    } else {
        Err(Error::OutsideChart { t, y: y.iter().copied().collect() })
    }
}

/// `x = u(t, y)`, `v = u_t + u_y ẏ`.
pub fn pushforward_state(emb: &dyn Embedding, gs: &GeneralizedState) -> Result<State> {
    check_domain(emb, gs.t, &gs.y)?;
    ensure_len("generalized velocity", emb.dim(), gs.w.len())?;
    let x = emb.position(gs.t, &gs.y);
    let v = emb.d_t(gs.t, &gs.y) + emb.d_y(gs.t, &gs.y) * &gs.w;
    State::new(gs.t, x, v)
}

/// `ẍ = u_tt + 2 u_ty ẏ + u_yy[ẏ, ẏ] + u_y ÿ`.
pub fn pushforward_acceleration(emb: &dyn Embedding, jet: &Jet) -> DVector<f64> {
    let (t, y, w) = (jet.t, &jet.y, &jet.w);
    let mut xdd = emb.d_tt(t, y) + emb.d_ty(t, y) * w * 2.0 + emb.d_y(t, y) * &jet.a;
    for (k, dk) in emb.d_yy(t, y).iter().enumerate() {
        xdd += dk * w * w[k];
    }
    xdd
}

/// Values of the decomposition `L = ½ ẏᵀ M₂ ẏ + b·ẏ + T₀` at `(t, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticParts {
    pub m2: DMatrix<f64>,
    pub b: DVector<f64>,
    pub t0: f64,
}

/// First derivatives of the decomposition pieces.
#[derive(Debug, Clone)]
pub struct QuadraticPartsDerivatives {
    pub dm2_dt: DMatrix<f64>,
    /// Entry `k` is `∂M₂/∂yᵏ`.
    pub dm2_dy: Vec<DMatrix<f64>>,
    pub db_dt: DVector<f64>,
    /// `(i, k) = ∂bᵢ/∂yᵏ`.
    pub db_dy: DMatrix<f64>,
    pub dt0_dy: DVector<f64>,
}

/// A Lagrangian at most quadratic in the generalized velocities.
pub trait QuadraticLagrangian: Send + Sync {
    fn dim(&self) -> usize;
    fn parts(&self, t: f64, y: &DVector<f64>) -> QuadraticParts;
    fn derivatives(&self, t: f64, y: &DVector<f64>) -> QuadraticPartsDerivatives;
}

/// `[L]_k = d/dt ∂L/∂ẏᵏ − ∂L/∂yᵏ`, expanded as
/// `L_ẏt + L_ẏy ẏ + L_ẏẏ ÿ − L_y` with `L_ẏẏ = M₂`.
pub fn lagrangian_derivative(lag: &dyn QuadraticLagrangian, jet: &Jet) -> DVector<f64> {
    let r = lag.dim();
    let (w, a) = (&jet.w, &jet.a);
    let p = lag.parts(jet.t, &jet.y);
    let d = lag.derivatives(jet.t, &jet.y);
    // L_ẏ = M₂ ẏ + b
    let mut out = &p.m2 * a + &d.dm2_dt * w + &d.db_dt;
    for k in 0..r {
        out += (&d.dm2_dy[k] * w + d.db_dy.column(k)) * w[k];
    }
    // L_y
    for i in 0..r {
        let quad = 0.5 * w.dot(&(&d.dm2_dy[i] * w));
        let lin = d.db_dy.column(i).dot(w);
        out[i] -= quad + lin + d.dt0_dy[i];
    }
    out
}

/// `L(t, y, ẏ) = T(t, u(t, y), u_t + u_y ẏ)` with `T = ½ ẋᵀ G ẋ`.
#[derive(Clone)]
pub struct PullbackLagrangian {
    pub embedding: Arc<dyn Embedding>,
    pub mass: MassMatrix,
}

pub fn pullback_lagrangian(emb: Arc<dyn Embedding>, mass: &MassMatrix) -> Result<PullbackLagrangian> {
    ensure_len("embedding ambient dimension", mass.dim(), emb.ambient_dim())?;
    Ok(PullbackLagrangian {
        embedding: emb,
        mass: mass.clone(),
    })
}

impl PullbackLagrangian {
    /// `L` straight from its definition, without the decomposition.
    pub fn value(&self, t: f64, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let v = self.embedding.d_t(t, y) + self.embedding.d_y(t, y) * w;
        self.mass.kinetic_energy(&v)
    }

    /// `L_ẏ = M₂ ẏ + b`.
    pub fn d_w(&self, t: f64, y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let p = self.parts(t, y);
        &p.m2 * w + p.b
    }

    /// `L_y`.
    pub fn d_y(&self, t: f64, y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.derivatives(t, y);
        DVector::from_fn(self.dim(), |i, _| {
            0.5 * w.dot(&(&d.dm2_dy[i] * w)) + d.db_dy.column(i).dot(w) + d.dt0_dy[i]
        })
    }
}

impl QuadraticLagrangian for PullbackLagrangian {
    fn dim(&self) -> usize {
        self.embedding.dim()
    }

    fn parts(&self, t: f64, y: &DVector<f64>) -> QuadraticParts {
        let g = self.mass.matrix();
        let ut = self.embedding.d_t(t, y);
        let uy = self.embedding.d_y(t, y);
        let g_uy = g * &uy;
        let m2 = uy.transpose() * &g_uy;
        QuadraticParts {
            m2: (&m2 + m2.transpose()) * 0.5,
            b: g_uy.tr_mul(&ut),
            t0: 0.5 * ut.dot(&(g * &ut)),
        }
    }

    fn derivatives(&self, t: f64, y: &DVector<f64>) -> QuadraticPartsDerivatives {
        let emb = &self.embedding;
        let g = self.mass.matrix();
        let ut = emb.d_t(t, y);
        let uy = emb.d_y(t, y);
        let utt = emb.d_tt(t, y);
        let uty = emb.d_ty(t, y);
        let uyy = emb.d_yy(t, y);
        let g_uy = g * &uy;
        let g_ut = g * &ut;
        let sym = |a: DMatrix<f64>| &a + a.transpose();

        let dm2_dt = sym(uty.transpose() * &g_uy);
        let dm2_dy = uyy.iter().map(|dk| sym(dk.transpose() * &g_uy)).collect();
        // b = u_yᵀ G u_t
        let db_dt = uty.tr_mul(&g_ut) + g_uy.tr_mul(&utt);
        let r = emb.dim();
        let mut db_dy = DMatrix::zeros(r, r);
        for (k, dk) in uyy.iter().enumerate() {
            let col = dk.tr_mul(&g_ut) + g_uy.tr_mul(&uty.column(k));
            db_dy.set_column(k, &col);
        }
        let dt0_dy = uty.tr_mul(&g_ut);
        QuadraticPartsDerivatives {
            dm2_dt,
            dm2_dy,
            db_dt,
            db_dy,
            dt0_dy,
        }
    }
}

/// `(M₂, b, T₀)` at `(t, y)`; fails where `M₂` is not positive definite.
pub fn decompose_t(lag: &dyn QuadraticLagrangian, t: f64, y: &DVector<f64>) -> Result<QuadraticParts> {
    let p = lag.parts(t, y);
    if !check_spd(&p.m2, 1e-12).passed() {
        return Err(Error::ChartDegenerate {
            t,
            y: y.iter().copied().collect(),
            reason: "kinetic metric M₂ = u_yᵀ G u_y is not positive definite".into(),
        });
    }
    Ok(p)
}

/// `Q(t, y, ẏ) = f(t, u, u_t + u_y ẏ) u_y`.
#[derive(Clone)]
pub struct GeneralizedForce {
    pub embedding: Arc<dyn Embedding>,
    pub force: Arc<dyn ForceField>,
}

pub fn generalized_forces(emb: Arc<dyn Embedding>, force: Arc<dyn ForceField>) -> Result<GeneralizedForce> {
    ensure_len("force dimension", emb.ambient_dim(), force.dim())?;
    Ok(GeneralizedForce { embedding: emb, force })
}

impl GeneralizedForce {
    pub fn eval(&self, gs: &GeneralizedState) -> Result<DVector<f64>> {
        let s = pushforward_state(self.embedding.as_ref(), gs)?;
        let f = self.force.value(&s);
        Ok(self.embedding.d_y(gs.t, &gs.y).tr_mul(&f))
    }
}

/// `‖([𝓛] − f)|_{x=u} u_y − ([L] − Q)‖_∞` at a jet, where the ambient
/// Lagrangian derivative is `[𝓛] = (G ẍ)ᵀ` at the pushed-forward jet.
pub fn covariance_residual(
    emb: &Arc<dyn Embedding>,
    mass: &MassMatrix,
    force: Option<&Arc<dyn ForceField>>,
    jet: &Jet,
) -> Result<f64> {
    let lag = pullback_lagrangian(emb.clone(), mass)?;
    let xdd = pushforward_acceleration(emb.as_ref(), jet);
    let uy = emb.d_y(jet.t, &jet.y);
    let mut ambient = mass.matrix() * xdd;
    let mut intrinsic = lagrangian_derivative(&lag, jet);
    if let Some(force) = force {
        let gs = GeneralizedState {
            t: jet.t,
            y: jet.y.clone(),
            w: jet.w.clone(),
        };
        let s = pushforward_state(emb.as_ref(), &gs)?;
        let f = force.value(&s);
        intrinsic -= uy.tr_mul(&f);
        ambient -= f;
    }
    Ok((uy.tr_mul(&ambient) - intrinsic).amax())
}

#[derive(Debug, Clone)]
pub struct GeneralizedSample {
    pub state: GeneralizedState,
    /// `ÿ`.
    pub acceleration: DVector<f64>,
    pub force: DVector<f64>,
    pub covariance_residual: f64,
    /// Pushforward `(x, v)`.
    pub ambient: State,
}

#[derive(Debug, Clone)]
pub struct GeneralizedTrajectory {
    pub samples: Vec<GeneralizedSample>,
    pub dim: usize,
}

impl GeneralizedTrajectory {
    /// CSV with header `t,y1..yr,w1..wr,Q1..Qr,covariance_residual`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let r = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=r).map(|i| format!("y{i}")));
        header.extend((1..=r).map(|i| format!("w{i}")));
        header.extend((1..=r).map(|i| format!("Q{i}")));
        header.push("covariance_residual".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_num(s.state.t)];
            row.extend(s.state.y.iter().map(|&c| fmt_num(c)));
            row.extend(s.state.w.iter().map(|&c| fmt_num(c)));
            row.extend(s.force.iter().map(|&c| fmt_num(c)));
            row.push(fmt_num(s.covariance_residual));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn max_covariance_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.covariance_residual).fold(0.0, f64::max)
    }
}

/// `ÿ = M₂⁻¹ (Q − [L]|_{ÿ=0})`.
pub fn generalized_acceleration(
    lag: &PullbackLagrangian,
    q: &GeneralizedForce,
    gs: &GeneralizedState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_domain(lag.embedding.as_ref(), gs.t, &gs.y)?;
    let r = lag.dim();
    let jet = Jet {
        t: gs.t,
        y: gs.y.clone(),
        w: gs.w.clone(),
        a: DVector::zeros(r),
    };
    let rest = lagrangian_derivative(lag, &jet);
    let force = q.eval(gs)?;
    let m2 = lag.parts(gs.t, &gs.y).m2;
    let chol = Cholesky::new(m2).ok_or_else(|| Error::ChartDegenerate {
        t: gs.t,
        y: gs.y.iter().copied().collect(),
        reason: "kinetic metric M₂ lost positive definiteness".into(),
    })?;
    Ok((chol.solve(&(&force - rest)), force))
}

/// Integrate the second-kind equations `[L] = Q` as a first-order system in
/// `(y, ẏ)`.
pub fn integrate_second_kind(
    emb: Arc<dyn Embedding>,
    sys: &MechanicalSystem,
    init: &GeneralizedState,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<GeneralizedTrajectory> {
    let lag = pullback_lagrangian(emb.clone(), &sys.mass)?;
    let q = generalized_forces(emb.clone(), sys.force.clone())?;
    let r = emb.dim();
    ensure_len("initial generalized velocity", r, init.w.len())?;
    decompose_t(&lag, init.t, &init.y)?;

    let split = |t: f64, z: &DVector<f64>| GeneralizedState {
        t,
        y: z.rows(0, r).into_owned(),
        w: z.rows(r, r).into_owned(),
    };
    let rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let gs = split(t, z);
        let (a, _) = generalized_acceleration(&lag, &q, &gs)?;
        let mut dz = DVector::zeros(2 * r);
        dz.rows_mut(0, r).copy_from(&gs.w);
        dz.rows_mut(r, r).copy_from(&a);
        Ok(dz)
    };

    let mut samples = Vec::new();
    let mut record = |gs: GeneralizedState| -> Result<()> {
        let (a, force) = generalized_acceleration(&lag, &q, &gs)?;
        let jet = Jet {
            t: gs.t,
            y: gs.y.clone(),
            w: gs.w.clone(),
            a: a.clone(),
        };
        let covariance_residual = covariance_residual(&emb, &sys.mass, Some(&sys.force), &jet)?;
        let ambient = pushforward_state(emb.as_ref(), &gs)?;
        samples.push(GeneralizedSample {
            state: gs,
            acceleration: a,
            force,
            covariance_residual,
            ambient,
        });
        Ok(())
    };
    record(init.clone())?;
    let mut z0 = DVector::zeros(2 * r);
    z0.rows_mut(0, r).copy_from(&init.y);
    z0.rows_mut(r, r).copy_from(&init.w);
    integrate::drive(cfg, &rhs, init.t, z0, t_end, |t, z| {
        let gs = split(t, &z);
        check_domain(emb.as_ref(), t, &gs.y)?;
        if !(decompose_t(&lag, t, &gs.y).is_ok()) {
            return Err(Error::ChartDegenerate {
                t,
                y: gs.y.iter().copied().collect(),
                reason: "kinetic metric M₂ lost positive definiteness".into(),
            });
        }
        record(gs)?;
        Ok(z)
    })?;
    Ok(GeneralizedTrajectory { samples, dim: r })
}

/// Sup-norm comparison of a first-kind trajectory with the pushforward of a
/// second-kind one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchReport {
    pub samples: usize,
    /// `sup ‖x(t) − u(t, y(t))‖_∞`.
    pub position: f64,
    /// `sup ‖ẋ(t) − (u_t + u_y ẏ)‖_∞`.
    pub velocity: f64,
    /// `sup ‖y_inv(t) − y(t)‖_∞` where `y_inv` solves `u(t, y) = x(t)`.
    pub inversion: f64,
    /// Largest `G`-norm residual `‖x − u(t, y_inv)‖` of the chart inversion.
    pub inversion_residual: f64,
}

impl MatchReport {
    pub fn discrepancy(&self) -> f64 {
        self.position.max(self.velocity)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.discrepancy() <= tol
    }
}

/// Chart inversion tolerance and iteration cap.
pub const INVERSION_TOL: f64 = 1e-12;
pub const INVERSION_MAX_ITER: usize = 20;

/// Solve `u(t, y) = x` in the `G`-weighted least-squares sense by
/// Gauss–Newton from `y0`.
pub fn invert_chart(emb: &dyn Embedding, mass: &MassMatrix, t: f64, x: &DVector<f64>, y0: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let g = mass.matrix();
    let mut y = y0.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..INVERSION_MAX_ITER {
        let r = x - emb.position(t, &y);
        residual = r.dot(&(g * &r)).sqrt();
        let uy = emb.d_y(t, &y);
        let g_uy = g * &uy;
        let normal = uy.transpose() * &g_uy;
        let Some(chol) = Cholesky::new(normal) else {
            break;
        };
        let step = chol.solve(&g_uy.tr_mul(&r));
        y += &step;
        if step.amax() <= INVERSION_TOL * (1.0 + y.amax()) {
            let r = x - emb.position(t, &y);
            return Ok((y, r.dot(&(g * &r)).sqrt()));
        }
    }
    Err(Error::ChartInversion { t, residual })
}

/// Cubic Hermite interpolation of `(y, ẏ)` at time `t`, using `ẏ` and `ÿ`
/// as the slopes.
pub fn resample(traj: &GeneralizedTrajectory, t: f64) -> Result<GeneralizedState> {
    let samples = &traj.samples;
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.state.t, l.state.t),
        _ => return Err(Error::Config("empty generalized trajectory".into())),
    };
    let slack = 1e-9 * (1.0 + last.abs());
    if t < first - slack || t > last + slack {
        return Err(Error::Config(format!("time {t} outside the generalized trajectory [{first}, {last}]")));
    }
    let idx = samples.partition_point(|s| s.state.t < t);
    if idx < samples.len() && samples[idx].state.t == t {
        return Ok(samples[idx].state.clone());
    }
    let hi = idx.clamp(1, samples.len() - 1);
    let (p, q) = (&samples[hi - 1], &samples[hi]);
    let h = q.state.t - p.state.t;
    let s = ((t - p.state.t) / h).clamp(0.0, 1.0);
    let (h00, h10, h01, h11) = (
        2.0 * s.powi(3) - 3.0 * s * s + 1.0,
        s.powi(3) - 2.0 * s * s + s,
        -2.0 * s.powi(3) + 3.0 * s * s,
        s.powi(3) - s * s,
    );
    let y = &p.state.y * h00 + &p.state.w * (h10 * h) + &q.state.y * h01 + &q.state.w * (h11 * h);
    let w = &p.state.w * h00 + &p.acceleration * (h10 * h) + &q.state.w * h01 + &q.acceleration * (h11 * h);
    Ok(GeneralizedState { t, y, w })
}

/// Compare on the first-kind time grid; per-sample work runs on `exec`.
pub fn match_trajectories(
    traj_x: &Trajectory,
    emb: &Arc<dyn Embedding>,
    mass: &MassMatrix,
    traj_y: &GeneralizedTrajectory,
    exec: Execution,
) -> Result<MatchReport> {
    let rows = batch::try_map(exec, &traj_x.samples, |sample| {
        let s = &sample.state;
        let gs = resample(traj_y, s.t)?;
        let pushed = pushforward_state(emb.as_ref(), &gs)?;
        let (y_inv, residual) = invert_chart(emb.as_ref(), mass, s.t, &s.x, &gs.y)?;
        Ok([
            (&s.x - &pushed.x).amax(),
            (&s.v - &pushed.v).amax(),
            (y_inv - &gs.y).amax(),
            residual,
        ])
    })?;
    let sup = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    Ok(MatchReport {
        samples: rows.len(),
        position: sup(0),
        velocity: sup(1),
        inversion: sup(2),
        inversion_residual: sup(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, CircleChart, IdentityChart, RotatingLineChart, SphereChart};
    use crate::dynamics::integrate_first_kind;
    use crate::model::{uniform_gravity, ConstantForce, NoForce};
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gs(t: f64, y: &[f64], w: &[f64]) -> GeneralizedState {
        GeneralizedState::from_slices(t, y, w).unwrap()
    }

    fn jet(t: f64, y: &[f64], w: &[f64], a: &[f64]) -> Jet {
        Jet {
            t,
            y: DVector::from_column_slice(y),
            w: DVector::from_column_slice(w),
            a: DVector::from_column_slice(a),
        }
    }

    fn circle() -> Arc<dyn Embedding> {
        Arc::new(CircleChart { radius: 1.0 })
    }

    fn wire() -> Arc<dyn Embedding> {
        Arc::new(RotatingLineChart { omega: 1.0 })
    }

    fn gravity_system(m: usize, axis: usize) -> MechanicalSystem {
        let mass = MassMatrix::identity(m);
        let f = uniform_gravity(10.0, axis, m, &mass);
        MechanicalSystem::new(mass, Arc::new(f)).unwrap()
    }

    /// Hides the analytic second derivatives of a chart.
    struct FirstOrderOnly(Arc<dyn Embedding>);

    impl Embedding for FirstOrderOnly {
        fn ambient_dim(&self) -> usize {
            self.0.ambient_dim()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn position(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
            self.0.position(t, y)
        }
        fn d_t(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
            self.0.d_t(t, y)
        }
        fn d_y(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
            self.0.d_y(t, y)
        }
    }

    #[test]
    fn pushforward_examples() {
        let s = pushforward_state(circle().as_ref(), &gs(0.0, &[0.0], &[2.0])).unwrap();
        assert_eq!(s.x, dvector![0.0, -1.0]);
        assert_eq!(s.v, dvector![2.0, 0.0]);
        let s = pushforward_state(circle().as_ref(), &gs(0.0, &[PI / 2.0], &[0.0])).unwrap();
        assert!((s.x - dvector![1.0, 0.0]).amax() < 1e-15);
        assert_eq!(s.v, dvector![0.0, 0.0]);
        let s = pushforward_state(wire().as_ref(), &gs(0.0, &[1.0], &[0.0])).unwrap();
        assert_eq!(s.x, dvector![1.0, 0.0]);
        assert_eq!(s.v, dvector![0.0, 1.0]);
    }

    #[test]
    fn pushforward_rejects_points_outside_the_chart() {
        let sphere: Arc<dyn Embedding> = Arc::new(SphereChart { radius: 1.0 });
        let err = pushforward_state(sphere.as_ref(), &gs(0.0, &[0.0, 0.3], &[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::OutsideChart { .. }));
        assert!(pushforward_state(sphere.as_ref(), &gs(0.0, &[1.0], &[0.0])).is_err());
    }

    #[test]
    fn pullback_examples() {
        let mass = MassMatrix::identity(2);
        let lag = pullback_lagrangian(circle(), &mass).unwrap();
        let (y, w) = (dvector![0.7], dvector![1.3]);
        assert!((lag.value(0.0, &y, &w) - 0.5 * 1.3 * 1.3).abs() < 1e-15);
        let p = decompose_t(&lag, 0.0, &y).unwrap();
        assert!((p.m2[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!((p.b[0], p.t0), (0.0, 0.0));

        let lag = pullback_lagrangian(wire(), &mass).unwrap();
        let (y, w) = (dvector![1.7], dvector![0.4]);
        let p = decompose_t(&lag, 0.9, &y).unwrap();
        assert!((p.m2[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(p.b[0].abs() < 1e-15);
        assert!((p.t0 - 0.5 * 1.7 * 1.7).abs() < 1e-14);
        assert!((lag.value(0.9, &y, &w) - 0.5 * (0.16 + 1.7 * 1.7)).abs() < 1e-14);

        let (m, l) = (2.5, 1.5);
        let lag = pullback_lagrangian(Arc::new(SphereChart { radius: l }), &MassMatrix::from_point_masses(&[m]).unwrap()).unwrap();
        let th = 0.8f64;
        let p = decompose_t(&lag, 0.0, &dvector![th, 2.0]).unwrap();
        let expected = dmatrix![m * l * l, 0.0; 0.0, m * l * l * th.sin().powi(2)];
        assert!((p.m2 - expected).amax() < 1e-14);
    }

    #[test]
    fn spherical_chart_degenerates_at_the_pole() {
        let lag = pullback_lagrangian(Arc::new(SphereChart { radius: 1.0 }), &MassMatrix::identity(3)).unwrap();
        let p = decompose_t(&lag, 0.0, &dvector![PI / 2.0, 0.3]).unwrap();
        assert!((p.m2 - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!(matches!(
            decompose_t(&lag, 0.0, &dvector![0.0, 0.3]),
            Err(Error::ChartDegenerate { .. })
        ));
    }

    #[test]
    fn decomposition_reproduces_the_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let charts: Vec<(Arc<dyn Embedding>, MassMatrix)> = vec![
            (circle(), MassMatrix::from_diagonal(&[2.0, 2.0]).unwrap()),
            (Arc::new(SphereChart { radius: 1.3 }), MassMatrix::identity(3)),
            (wire(), MassMatrix::identity(2)),
            (Arc::new(RotatingLineChart { omega: -0.7 }), MassMatrix::from_diagonal(&[1.0, 3.0]).unwrap()),
            (Arc::new(IdentityChart { dim: 3 }), MassMatrix::from_matrix(dmatrix![2.0, 0.1, 0.0; 0.1, 1.0, 0.2; 0.0, 0.2, 1.5]).unwrap()),
        ];
        for (emb, mass) in charts {
            let lag = pullback_lagrangian(emb.clone(), &mass).unwrap();
            let r = emb.dim();
            for _ in 0..100 {
                let t = rng.gen_range(-3.0..3.0);
                let y = DVector::from_fn(r, |_, _| rng.gen_range(0.1..3.0));
                let w = DVector::from_fn(r, |_, _| rng.gen_range(-2.0..2.0));
                let p = decompose_t(&lag, t, &y).unwrap();
                let l = lag.value(t, &y, &w);
                let split = 0.5 * w.dot(&(&p.m2 * &w)) + p.b.dot(&w) + p.t0;
                assert!((l - split).abs() <= 1e-10 * (1.0 + l.abs()));
            }
        }
    }

    #[test]
    fn generalized_force_examples() {
        let sys = gravity_system(2, 1);
        let q = generalized_forces(circle(), sys.force.clone()).unwrap();
        for th in [0.0, 0.3, -1.2, 2.5] {
            let val = q.eval(&gs(0.0, &[th], &[0.5])).unwrap()[0];
            assert!((val + 10.0 * th.sin()).abs() < 1e-13);
        }
        let none = generalized_forces(circle(), Arc::new(NoForce { dim: 2 })).unwrap();
        assert_eq!(none.eval(&gs(0.0, &[0.4], &[0.0])).unwrap()[0], 0.0);
        let normal = generalized_forces(circle(), Arc::new(ConstantForce { force: dvector![0.0, 7.0] })).unwrap();
        assert_eq!(normal.eval(&gs(0.0, &[0.0], &[1.0])).unwrap()[0], 0.0);
        assert!(generalized_forces(circle(), Arc::new(NoForce { dim: 3 })).is_err());
    }

    #[test]
    fn lagrangian_derivative_examples() {
        let mass = MassMatrix::identity(2);
        let lag = pullback_lagrangian(circle(), &mass).unwrap();
        assert!((lagrangian_derivative(&lag, &jet(0.0, &[0.0], &[0.0], &[1.7]))[0] - 1.7).abs() < 1e-15);
        let lag = pullback_lagrangian(wire(), &mass).unwrap();
        assert!((lagrangian_derivative(&lag, &jet(0.0, &[1.0], &[0.0], &[0.0]))[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn covariance_on_catalog_charts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = gravity_system(2, 1);
        let sphere_sys = gravity_system(3, 2);
        let cases: Vec<(Arc<dyn Embedding>, &MechanicalSystem)> = vec![
            (circle(), &sys),
            (wire(), &sys),
            (Arc::new(SphereChart { radius: 1.0 }), &sphere_sys),
        ];
        for (emb, sys) in cases {
            let r = emb.dim();
            let fd: Arc<dyn Embedding> = Arc::new(FirstOrderOnly(emb.clone()));
            for _ in 0..100 {
                let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(r, |_, _| rng.gen_range(0.2..2.9));
                let j = Jet {
                    t: rng.gen_range(-2.0..2.0),
                    y: draw(&mut rng),
                    w: draw(&mut rng),
                    a: draw(&mut rng),
                };
                assert!(covariance_residual(&emb, &sys.mass, Some(&sys.force), &j).unwrap() <= 1e-9);
                assert!(covariance_residual(&fd, &sys.mass, Some(&sys.force), &j).unwrap() <= 1e-4);
            }
        }
        let id: Arc<dyn Embedding> = Arc::new(IdentityChart { dim: 2 });
        let j = jet(0.3, &[1.0, 2.0], &[-1.0, 0.5], &[3.0, -2.0]);
        assert_eq!(covariance_residual(&id, &sys.mass, None, &j).unwrap(), 0.0);
    }

    #[test]
    fn second_kind_pendulum_period() {
        let sys = gravity_system(2, 1);
        let traj = integrate_second_kind(circle(), &sys, &gs(0.0, &[0.1], &[0.0]), 3.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        let crossings: Vec<f64> = traj
            .samples
            .windows(2)
            .filter(|p| p[0].state.y[0].signum() != p[1].state.y[0].signum())
            .map(|p| {
                let (a, b) = (&p[0].state, &p[1].state);
                a.t + (b.t - a.t) * a.y[0] / (a.y[0] - b.y[0])
            })
            .collect();
        let period = crossings[2] - crossings[0];
        let linear = 2.0 * PI / 10f64.sqrt();
        assert!(((period - linear) / linear).abs() < 0.01, "{period}");
        assert!(traj.max_covariance_residual() <= 1e-9);
    }

    #[test]
    fn second_kind_free_particle_is_a_line() {
        let sys = MechanicalSystem::new(MassMatrix::identity(2), Arc::new(NoForce { dim: 2 })).unwrap();
        let id: Arc<dyn Embedding> = Arc::new(IdentityChart { dim: 2 });
        let traj = integrate_second_kind(id, &sys, &gs(0.0, &[1.0, -1.0], &[0.5, 2.0]), 1.0, &IntegratorConfig::rk4(0.1)).unwrap();
        for s in &traj.samples {
            let t = s.state.t;
            assert!((&s.state.y - dvector![1.0 + 0.5 * t, -1.0 + 2.0 * t]).amax() < 1e-14);
        }
    }

    #[test]
    fn rotating_wire_runs_away_as_cosh() {
        let sys = MechanicalSystem::new(MassMatrix::identity(2), Arc::new(NoForce { dim: 2 })).unwrap();
        let traj = integrate_second_kind(wire(), &sys, &gs(0.0, &[1.0], &[0.0]), 3.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        let worst = traj.samples.iter().map(|s| (s.state.y[0] - s.state.t.cosh()).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn second_kind_stops_at_the_pole() {
        // straight over the pole θ = 0
        let sys = MechanicalSystem::new(MassMatrix::identity(3), Arc::new(NoForce { dim: 3 })).unwrap();
        let err = integrate_second_kind(Arc::new(SphereChart { radius: 1.0 }), &sys, &gs(0.0, &[0.5, 0.0], &[-1.0, 0.0]), 2.0, &IntegratorConfig::rk4(1e-2)).unwrap_err();
        assert!(matches!(err, Error::OutsideChart { .. } | Error::ChartDegenerate { .. }), "{err}");
    }

    #[test]
    fn chart_is_tangent_to_the_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pairs: Vec<(Arc<dyn Embedding>, crate::constraints::ConstraintSet)> = vec![
            (circle(), catalog::sphere(1.0, 2).unwrap()),
            (Arc::new(SphereChart { radius: 1.0 }), catalog::sphere(1.0, 3).unwrap()),
            (wire(), catalog::rotating_line(1.0).unwrap()),
        ];
        for (emb, cs) in pairs {
            let g = cs.generator().unwrap();
            for _ in 0..100 {
                let t = rng.gen_range(-3.0..3.0);
                let y = DVector::from_fn(emb.dim(), |_, _| rng.gen_range(0.1..3.0));
                let s = State::new(t, emb.position(t, &y), DVector::zeros(emb.ambient_dim())).unwrap();
                assert!(g.value(&s).amax() <= 1e-10);
                assert!((g.d_x(&s).unwrap() * emb.d_y(t, &y)).amax() <= 1e-9);
            }
        }
    }

    #[test]
    fn first_and_second_kind_agree() {
        let sys = gravity_system(2, 1);
        let cs = catalog::sphere(1.0, 2).unwrap();
        let cfg = IntegratorConfig::rk4(1e-3);
        let init = gs(0.0, &[0.0], &[2.0]);
        let ty = integrate_second_kind(circle(), &sys, &init, 2.0, &cfg).unwrap();
        let x0 = pushforward_state(circle().as_ref(), &init).unwrap();
        let tx = integrate_first_kind(&sys, &cs, &x0, 2.0, &cfg).unwrap();
        let report = match_trajectories(&tx, &circle(), &sys.mass, &ty, Execution::default()).unwrap();
        assert_eq!(report.samples, tx.len());
        assert!(report.passed(1e-5), "{report:?}");
        assert!(report.inversion <= 1e-5);
        assert!(report.inversion_residual <= 1e-10);
        let seq = match_trajectories(&tx, &circle(), &sys.mass, &ty, Execution::Sequential).unwrap();
        assert_eq!(seq, report);

        let skewed = integrate_second_kind(circle(), &sys, &gs(0.0, &[0.0], &[2.1]), 2.0, &cfg).unwrap();
        let bad = match_trajectories(&tx, &circle(), &sys.mass, &skewed, Execution::default()).unwrap();
        assert!(!bad.passed(1e-5));
        assert!(bad.discrepancy() > 1e-2);
    }

    #[test]
    fn resampling_hits_grid_points_exactly() {
        let sys = gravity_system(2, 1);
        let ty = integrate_second_kind(circle(), &sys, &gs(0.0, &[0.3], &[0.0]), 1.0, &IntegratorConfig::rk4(0.1)).unwrap();
        let k = &ty.samples[4].state;
        assert_eq!(&resample(&ty, k.t).unwrap(), k);
        let mid = resample(&ty, 0.45).unwrap();
        let fine = integrate_second_kind(circle(), &sys, &gs(0.0, &[0.3], &[0.0]), 0.45, &IntegratorConfig::rk4(1e-3)).unwrap();
        let exact = &fine.samples.last().unwrap().state;
        assert!((mid.y[0] - exact.y[0]).abs() < 1e-4);
        assert!(resample(&ty, 1.5).is_err());
    }

    #[test]
    fn chart_inversion() {
        let emb = SphereChart { radius: 1.0 };
        let mass = MassMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let y = dvector![1.1, -0.4];
        let x = emb.position(0.0, &y);
        let (found, residual) = invert_chart(&emb, &mass, 0.0, &x, &dvector![1.0, -0.3]).unwrap();
        assert!((found - y).amax() < 1e-12);
        assert!(residual < 1e-14);
    }

    #[test]
    fn generalized_csv_header() {
        let sys = gravity_system(3, 2);
        let ty = integrate_second_kind(Arc::new(SphereChart { radius: 1.0 }), &sys, &gs(0.0, &[PI / 3.0, 0.0], &[0.0, 1.0]), 0.01, &IntegratorConfig::rk4(1e-2)).unwrap();
        let mut out = Vec::new();
        ty.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,y1,y2,w1,w2,Q1,Q2,covariance_residual");
        assert_eq!(text.lines().count(), 3);
    }
}
