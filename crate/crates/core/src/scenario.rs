//! Scenario documents (JSON) and the built-in catalog. A scenario names a
//! mass model, a force, a constraint set and optionally a chart from fixed
//! catalogs, so every derivative it uses is analytic.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, CircleChart, IdentityChart, RotatingLineChart, SphereChart};
use crate::constraints::ConstraintSet;
use crate::dynamics::INITIAL_TOL;
use crate::error::{Error, Result};
use crate::generalized::{pushforward_state, Embedding, GeneralizedState};
use crate::integrate::IntegratorConfig;
use crate::model::{
    uniform_gravity, ConstantForce, ForceField, LinearDamping, LinearSpring, MassMatrix, MechanicalSystem, NoForce, State,
};

pub const CATALOG: [&str; 4] = ["pendulum", "spherical-pendulum", "rotating-wire-bead", "knife-edge"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MassSpec {
    /// Point masses in space; each mass fills three diagonal entries.
    PointMasses { masses: Vec<f64> },
    Diagonal { values: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForceSpec {
    None,
    /// `f = −g₀ G e` with `e` selecting coordinate `axis` of every point.
    UniformGravity { g0: f64, axis: usize, spatial_dim: usize },
    LinearSpring { stiffness: f64, anchor: Vec<f64> },
    Constant { force: Vec<f64> },
    LinearDamping { coefficient: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintSpec {
    None,
    Sphere { radius: f64 },
    RotatingLine { omega: f64 },
    KnifeEdge,
    CoordinatePlane { index: usize },
}

impl ConstraintSpec {
    pub fn is_rheonomic(&self) -> bool {
        matches!(self, ConstraintSpec::RotatingLine { omega } if *omega != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    CircleChart { radius: f64 },
    SphereChart { radius: f64 },
    RotatingLineChart { omega: f64 },
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Ambient { t: f64, x: Vec<f64>, v: Vec<f64> },
    Generalized { t: f64, y: Vec<f64>, w: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    FirstIntegral,
    GdeResidual,
    VirtualWork,
    Reparametrization,
    Realization,
    Energy,
    Covariance,
    Decomposition,
    Equivalence,
}

impl CheckKind {
    pub const ALL: [CheckKind; 9] = [
        CheckKind::FirstIntegral,
        CheckKind::GdeResidual,
        CheckKind::VirtualWork,
        CheckKind::Reparametrization,
        CheckKind::Realization,
        CheckKind::Energy,
        CheckKind::Covariance,
        CheckKind::Decomposition,
        CheckKind::Equivalence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::FirstIntegral => "first-integral",
            CheckKind::GdeResidual => "gde-residual",
            CheckKind::VirtualWork => "virtual-work",
            CheckKind::Reparametrization => "reparametrization",
            CheckKind::Realization => "realization",
            CheckKind::Energy => "energy",
            CheckKind::Covariance => "covariance",
            CheckKind::Decomposition => "decomposition",
            CheckKind::Equivalence => "equivalence",
        }
    }

    /// Default pass threshold.
    pub fn default_threshold(self) -> f64 {
        match self {
            CheckKind::FirstIntegral => 1e-6,
            CheckKind::GdeResidual => 1e-8,
            CheckKind::VirtualWork => 1e-10,
            CheckKind::Reparametrization => 1e-8,
            CheckKind::Realization => 1e-12,
            CheckKind::Energy => 1e-6,
            CheckKind::Covariance => 1e-7,
            CheckKind::Decomposition => 1e-10,
            CheckKind::Equivalence => 1e-5,
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CheckKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CheckKind::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = CheckKind::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!("unknown check `{s}` (one of {})", names.join(", ")))
        })
    }
}

fn default_t_end() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Ambient dimension `m`.
    pub dim: usize,
    pub mass: MassSpec,
    pub force: ForceSpec,
    pub constraints: ConstraintSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingSpec>,
    pub initial: InitialSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Empty means every applicable check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckKind>,
}

/// A validated scenario with its runtime objects.
#[derive(Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub system: MechanicalSystem,
    pub constraints: ConstraintSet,
    pub embedding: Option<Arc<dyn Embedding>>,
    pub initial: State,
    /// Initial data in the chart, given or recovered by inversion.
    pub initial_generalized: Option<GeneralizedState>,
}

impl Problem {
    pub fn m(&self) -> usize {
        self.scenario.dim
    }

    pub fn n(&self) -> usize {
        self.constraints.count()
    }

    pub fn r(&self) -> usize {
        self.m() - self.n()
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("scenario", &self.scenario.name)
            .field("m", &self.m())
            .field("n", &self.n())
            .field("initial", &self.initial)
            .finish()
    }
}

pub fn catalog_scenario(name: &str) -> Result<Scenario> {
    let integrator = IntegratorConfig::rk4(1e-3);
    let scenario = match name {
        "pendulum" => Scenario {
            name: name.into(),
            dim: 2,
            mass: MassSpec::Diagonal { values: vec![1.0, 1.0] },
            force: ForceSpec::UniformGravity {
                g0: 10.0,
                axis: 1,
                spatial_dim: 2,
            },
            constraints: ConstraintSpec::Sphere { radius: 1.0 },
            embedding: Some(EmbeddingSpec::CircleChart { radius: 1.0 }),
            initial: InitialSpec::Ambient {
                t: 0.0,
                x: vec![0.0, -1.0],
                v: vec![2.0, 0.0],
            },
            t_end: 10.0,
            integrator,
            checks: vec![],
        },
        "spherical-pendulum" => Scenario {
            name: name.into(),
            dim: 3,
            mass: MassSpec::PointMasses { masses: vec![1.0] },
            force: ForceSpec::UniformGravity {
                g0: 10.0,
                axis: 2,
                spatial_dim: 3,
            },
            constraints: ConstraintSpec::Sphere { radius: 1.0 },
            embedding: Some(EmbeddingSpec::SphereChart { radius: 1.0 }),
            initial: InitialSpec::Generalized {
                t: 0.0,
                y: vec![PI / 3.0, 0.0],
                w: vec![0.0, 2.0],
            },
            t_end: 10.0,
            integrator,
            checks: vec![],
        },
        "rotating-wire-bead" => Scenario {
            name: name.into(),
            dim: 2,
            mass: MassSpec::Diagonal { values: vec![1.0, 1.0] },
            force: ForceSpec::None,
            constraints: ConstraintSpec::RotatingLine { omega: 1.0 },
            embedding: Some(EmbeddingSpec::RotatingLineChart { omega: 1.0 }),
            initial: InitialSpec::Ambient {
                t: 0.0,
                x: vec![1.0, 0.0],
                v: vec![0.0, 1.0],
            },
            t_end: 3.0,
            integrator,
            checks: vec![],
        },
        "knife-edge" => Scenario {
            name: name.into(),
            dim: 3,
            mass: MassSpec::Diagonal { values: vec![1.0, 1.0, 0.5] },
            force: ForceSpec::None,
            constraints: ConstraintSpec::KnifeEdge,
            embedding: None,
            initial: InitialSpec::Ambient {
                t: 0.0,
                x: vec![0.0, 0.0, 0.0],
                v: vec![1.0, 0.0, 0.5],
            },
            t_end: 10.0,
            integrator,
            checks: vec![],
        },
        _ => {
            return Err(Error::UnknownScenario {
                name: name.into(),
                available: CATALOG.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(scenario)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    Ok(serde_json::from_str(text)?)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
        other => other,
    })
}

pub fn write_scenario(scenario: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(scenario)?)
}

/// A catalog name or a path to a scenario document.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if CATALOG.contains(&name_or_path) {
        return catalog_scenario(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return parse_scenario(path);
    }
    catalog_scenario(name_or_path)
}

impl Scenario {
    /// Validate and build the runtime objects; reports every problem found.
    pub fn build(&self) -> Result<Problem> {
        let mut errors = Vec::new();
        let m = self.dim;
        if m == 0 {
            errors.push("dim must be positive".to_string());
        }
        if !(self.t_end.is_finite()) {
            errors.push(format!("t_end must be finite (got {})", self.t_end));
        }
        if let Err(e) = self.integrator.validate() {
            errors.push(format!("integrator: {e}"));
        }
        let mass = collect(&mut errors, "mass", self.build_mass());
        let force = collect(&mut errors, "force", self.build_force(mass.as_ref()));
        let constraints = collect(&mut errors, "constraints", self.build_constraints());
        let embedding = match &self.embedding {
            Some(spec) => collect(&mut errors, "embedding", self.build_embedding(spec, constraints.as_ref())).map(Some),
            None => Some(None),
        };

        let (initial, initial_generalized) = match (&self.initial, &embedding) {
            (InitialSpec::Ambient { t, x, v }, _) => {
                check_len(&mut errors, "initial.x", m, x.len());
                check_len(&mut errors, "initial.v", m, v.len());
                let s = if x.len() == m && v.len() == m {
                    collect(&mut errors, "initial", State::from_slices(*t, x, v))
                } else {
                    None
                };
                (s, None)
            }
            (InitialSpec::Generalized { t, y, w }, Some(Some(emb))) => {
                check_len(&mut errors, "initial.y", emb.dim(), y.len());
                check_len(&mut errors, "initial.w", emb.dim(), w.len());
                if y.len() == emb.dim() && w.len() == emb.dim() {
                    let gs = GeneralizedState::from_slices(*t, y, w).expect("lengths checked");
                    let s = collect(&mut errors, "initial", pushforward_state(emb.as_ref(), &gs));
                    (s, Some(gs))
                } else {
                    (None, None)
                }
            }
            (InitialSpec::Generalized { .. }, Some(None)) => {
                errors.push("initial: generalized initial data requires an embedding".into());
                (None, None)
            }
            (InitialSpec::Generalized { .. }, None) => (None, None),
        };

        if let (Some(cs), Some(s)) = (&constraints, &initial) {
            if cs.dim() == s.dim() {
                initial_residuals(&mut errors, cs, s);
            }
        }

        let system = match (mass, force) {
            (Some(mass), Some(force)) => collect(&mut errors, "system", MechanicalSystem::new(mass, force)),
            _ => None,
        };

        let initial_generalized = match (&initial_generalized, &embedding, &initial) {
            (Some(gs), _, _) => Some(gs.clone()),
            (None, Some(Some(emb)), Some(s)) if errors.is_empty() => {
                collect(&mut errors, "initial", generalized_initial(emb.as_ref(), system.as_ref(), s))
            }
            _ => None,
        };

        if !errors.is_empty() {
            return Err(Error::Scenario(errors));
        }
        Ok(Problem {
            scenario: self.clone(),
            system: system.expect("validated"),
            constraints: constraints.expect("validated"),
            embedding: embedding.flatten(),
            initial: initial.expect("validated"),
            initial_generalized,
        })
    }

    fn build_mass(&self) -> Result<MassMatrix> {
        let mass = match &self.mass {
            MassSpec::PointMasses { masses } => MassMatrix::from_point_masses(masses)?,
            MassSpec::Diagonal { values } => MassMatrix::from_diagonal(values)?,
            MassSpec::Matrix { rows } => {
                let k = rows.len();
                if let Some(bad) = rows.iter().position(|r| r.len() != k) {
                    return Err(Error::Config(format!("row {bad} has {} entries, expected {k}", rows[bad].len())));
                }
                MassMatrix::from_matrix(DMatrix::from_fn(k, k, |i, j| rows[i][j]))?
            }
        };
        if mass.dim() != self.dim {
            return Err(Error::Dimension {
                what: "mass matrix".into(),
                expected: self.dim,
                got: mass.dim(),
            });
        }
        Ok(mass)
    }

    fn build_force(&self, mass: Option<&MassMatrix>) -> Result<Arc<dyn ForceField>> {
        let m = self.dim;
        let vector = |what: &str, v: &[f64]| -> Result<DVector<f64>> {
            if v.len() != m {
                return Err(Error::Dimension {
                    what: what.into(),
                    expected: m,
                    got: v.len(),
                });
            }
            Ok(DVector::from_column_slice(v))
        };
        Ok(match &self.force {
            ForceSpec::None => Arc::new(NoForce { dim: m }),
            ForceSpec::UniformGravity { g0, axis, spatial_dim } => {
                if *spatial_dim == 0 || !m.is_multiple_of(*spatial_dim) || axis >= spatial_dim {
                    return Err(Error::Config(format!(
                        "uniform-gravity needs axis < spatial_dim dividing dim (axis {axis}, spatial_dim {spatial_dim}, dim {m})"
                    )));
                }
                let Some(mass) = mass else {
                    return Err(Error::Config("uniform-gravity needs a valid mass model".into()));
                };
                Arc::new(uniform_gravity(*g0, *axis, *spatial_dim, mass))
            }
            ForceSpec::LinearSpring { stiffness, anchor } => Arc::new(LinearSpring {
                stiffness: *stiffness,
                anchor: vector("anchor", anchor)?,
            }),
            ForceSpec::Constant { force } => Arc::new(ConstantForce {
                force: vector("force", force)?,
            }),
            ForceSpec::LinearDamping { coefficient } => Arc::new(LinearDamping {
                coefficient: *coefficient,
                dim: m,
            }),
        })
    }

    fn build_constraints(&self) -> Result<ConstraintSet> {
        let m = self.dim;
        let fixed = |expected: usize, what: &str| {
            if m == expected {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what: what.into(),
                    expected,
                    got: m,
                })
            }
        };
        match &self.constraints {
            ConstraintSpec::None => Ok(ConstraintSet::empty(m)),
            ConstraintSpec::Sphere { radius } => catalog::sphere(*radius, m),
            ConstraintSpec::RotatingLine { omega } => {
                fixed(2, "rotating-line dimension")?;
                catalog::rotating_line(*omega)
            }
            ConstraintSpec::KnifeEdge => {
                fixed(3, "knife-edge dimension")?;
                catalog::knife_edge()
            }
            ConstraintSpec::CoordinatePlane { index } => catalog::coordinate_plane(*index, m),
        }
    }

    fn build_embedding(&self, spec: &EmbeddingSpec, cs: Option<&ConstraintSet>) -> Result<Arc<dyn Embedding>> {
        let emb: Arc<dyn Embedding> = match spec {
            EmbeddingSpec::CircleChart { radius } => Arc::new(CircleChart { radius: *radius }),
            EmbeddingSpec::SphereChart { radius } => Arc::new(SphereChart { radius: *radius }),
            EmbeddingSpec::RotatingLineChart { omega } => Arc::new(RotatingLineChart { omega: *omega }),
            EmbeddingSpec::Identity => Arc::new(IdentityChart { dim: self.dim }),
        };
        if emb.ambient_dim() != self.dim {
            return Err(Error::Dimension {
                what: "embedding ambient dimension".into(),
                expected: self.dim,
                got: emb.ambient_dim(),
            });
        }
        if let Some(cs) = cs {
            if cs.count() > 0 && !cs.is_holonomic() {
                return Err(Error::NotHolonomic("an embedding"));
            }
            if emb.dim() + cs.count() != self.dim {
                return Err(Error::Config(format!(
                    "chart dimension {} plus {} constraints does not equal dim {}",
                    emb.dim(),
                    cs.count(),
                    self.dim
                )));
            }
        }
        Ok(emb)
    }
}

fn collect<T>(errors: &mut Vec<String>, field: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{field}: {e}"));
            None
        }
    }
}

fn check_len(errors: &mut Vec<String>, field: &str, expected: usize, got: usize) {
    if expected != got {
        errors.push(format!("{field}: expected length {expected}, got {got}"));
    }
}

fn initial_residuals(errors: &mut Vec<String>, cs: &ConstraintSet, s: &State) {
    if let Some(g) = cs.generator() {
        let gn = g.value(s).amax();
        if !(gn <= INITIAL_TOL) {
            errors.push(format!("initial g residual {} exceeds {INITIAL_TOL:e}", short(gn)));
        }
    }
    match cs.eval(s) {
        Ok(phi) if !(phi.amax() <= INITIAL_TOL) => {
            errors.push(format!("initial phi residual {} exceeds {INITIAL_TOL:e}", short(phi.amax())));
        }
        Ok(_) => {}
        Err(e) => errors.push(format!("initial: {e}")),
    }
}

/// Up to six significant digits without trailing zeros.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "0" || s == "-0" {
        format!("{x:e}")
    } else {
        s.to_string()
    }
}

/// `(y, ẏ)` from ambient `(x, v)`: chart inversion, then `ẏ` as the
/// `G`-weighted least-squares solution of `u_y ẏ = v − u_t`.
fn generalized_initial(emb: &dyn Embedding, sys: Option<&MechanicalSystem>, s: &State) -> Result<GeneralizedState> {
    let mass = match sys {
        Some(sys) => sys.mass.clone(),
        None => MassMatrix::identity(s.dim()),
    };
    let guess = coarse_guess(emb, s);
    let (y, _) = crate::generalized::invert_chart(emb, &mass, s.t, &s.x, &guess)?;
    let uy = emb.d_y(s.t, &y);
    let g_uy = mass.matrix() * &uy;
    let normal = uy.transpose() * &g_uy;
    let rhs = g_uy.tr_mul(&(&s.v - emb.d_t(s.t, &y)));
    let w = normal
        .cholesky()
        .ok_or_else(|| Error::ChartDegenerate {
            t: s.t,
            y: y.iter().copied().collect(),
            reason: "u_y loses rank at the initial point".into(),
        })?
        .solve(&rhs);
    Ok(GeneralizedState { t: s.t, y, w })
}

/// Best of a coarse grid of chart points, as a Gauss–Newton starting value.
fn coarse_guess(emb: &dyn Embedding, s: &State) -> DVector<f64> {
    let r = emb.dim();
    let ticks: Vec<f64> = (0..24).map(|k| -PI + (k as f64 + 0.5) * PI / 12.0).collect();
    let mut best = (f64::INFINITY, DVector::zeros(r));
    let mut idx = vec![0usize; r];
    loop {
        let y = DVector::from_fn(r, |i, _| ticks[idx[i]]);
        if emb.in_domain(s.t, &y) {
            let d = (emb.position(s.t, &y) - &s.x).norm();
            if d < best.0 {
                best = (d, y);
            }
        }
        let mut k = 0;
        while k < r {
            idx[k] += 1;
            if idx[k] < ticks.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == r {
            break;
        }
    }
    best.1
}
