//! The four driver commands behind the command-line tool. Each returns a
//! [`Report`] plus the CSV artifacts it produced; nothing here touches the
//! filesystem.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{self, Execution};
use crate::dynamics::{self, integrate_first_kind, Trajectory};
use crate::error::{Error, Result};
use crate::generalized::{
    decompose_t, integrate_second_kind, match_trajectories, pullback_lagrangian, GeneralizedTrajectory,
};
use crate::integrate::{IntegratorConfig, Method, Projection};
use crate::reactions::{
    self, invariance_report_with, reaction_with_realization, virtual_work, CubicReparam, ExpMinusOne, IdentityReparam,
    LinearMix, Realization, Reparametrization,
};
use crate::report::{CheckResult, Environment, Quantity, Report};
use crate::sampling;
use crate::scenario::{CheckKind, Problem};
use crate::model::State;

/// Random states per sweep.
pub const VIRTUAL_WORK_STATES: usize = 1000;
pub const INVARIANCE_STATES: usize = 100;
pub const DECOMPOSITION_PROBES: usize = 100;
/// Half-width of the box random states are drawn from.
pub const SAMPLE_BOX: f64 = 2.0;

/// Command-line overrides and run settings.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub method: Option<Method>,
    pub projection: Option<Projection>,
    /// RK45 local error tolerance and projection tolerance.
    pub tol: Option<f64>,
    pub jobs: usize,
    pub seed: u64,
    pub thresholds: BTreeMap<CheckKind, f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_end: None,
            dt: None,
            method: None,
            projection: None,
            tol: None,
            jobs: 1,
            seed: 7,
            thresholds: BTreeMap::new(),
        }
    }
}

impl RunOptions {
    pub fn execution(&self) -> Execution {
        if self.jobs > 1 {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn threshold(&self, check: CheckKind) -> f64 {
        self.thresholds.get(&check).copied().unwrap_or(check.default_threshold())
    }

    /// Integrator settings and end time after applying the overrides.
    pub fn config(&self, problem: &Problem) -> Result<(IntegratorConfig, f64)> {
        let mut cfg = problem.scenario.integrator;
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(method) = self.method {
            cfg.method = method;
        }
        if let Some(projection) = self.projection {
            cfg.projection = projection;
        }
        if let Some(tol) = self.tol {
            cfg.tol = tol;
            cfg.projection_tol = tol;
        }
        cfg.validate()?;
        let t_end = self.t_end.unwrap_or(problem.scenario.t_end);
        if !(t_end >= problem.initial.t) || !t_end.is_finite() {
            return Err(Error::Config(format!("t_end {t_end} precedes the initial time {}", problem.initial.t)));
        }
        Ok((cfg, t_end))
    }

    fn environment(&self, problem: &Problem) -> Result<Environment> {
        let (cfg, t_end) = self.config(problem)?;
        Ok(Environment::new(&cfg, t_end, self.jobs, self.execution().is_parallel(), self.seed))
    }
}

/// A named text file produced by a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

fn csv_artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Artifact> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(Artifact {
        file_name: name.into(),
        contents: String::from_utf8(buf).expect("CSV is ASCII"),
    })
}

fn report(command: &str, problem: &Problem, opts: &RunOptions, checks: Vec<CheckResult>) -> Result<Report> {
    Ok(Report {
        command: command.into(),
        scenario: problem.scenario.name.clone(),
        environment: opts.environment(problem)?,
        quantities: vec![],
        checks,
    })
}

/// First-kind integration; checks drift, the general equation of dynamics
/// and energy along the run.
pub fn simulate(problem: &Problem, opts: &RunOptions) -> Result<Outcome> {
    let mut ctx = Context::new(problem, opts);
    let checks = [CheckKind::FirstIntegral, CheckKind::GdeResidual, CheckKind::Energy]
        .into_iter()
        .map(|c| ctx.run(c))
        .collect::<Result<Vec<_>>>()?;
    let traj = ctx.first_kind()?;
    let artifact = csv_artifact("trajectory.csv", |b| traj.write_csv(b))?;
    Ok(Outcome {
        report: report("simulate", problem, opts, checks)?,
        artifacts: vec![artifact],
    })
}

/// Parse `--state`: `2m` numbers `x, v` or `2m + 1` numbers `t, x, v`.
pub fn parse_state(text: &str, m: usize) -> Result<State> {
    let values = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Config(format!("state entry `{}`: {e}", p.trim()))))
        .collect::<Result<Vec<_>>>()?;
    let (t, rest) = match values.len() {
        n if n == 2 * m => (0.0, &values[..]),
        n if n == 2 * m + 1 => (values[0], &values[1..]),
        n => {
            return Err(Error::Config(format!(
                "state has {n} entries; expected {} (x, v) or {} (t, x, v)",
                2 * m,
                2 * m + 1
            )))
        }
    };
    State::from_slices(t, &rest[..m], &rest[m..])
}

/// Multipliers, reaction and acceleration at one state (the scenario's
/// initial state by default).
pub fn reactions(problem: &Problem, state: Option<&State>, opts: &RunOptions) -> Result<Outcome> {
    let s = state.unwrap_or(&problem.initial);
    let (sys, cs) = (&problem.system, &problem.constraints);
    let res = reactions::reaction(sys, cs, s)?;
    let xdd = sys.mass.solve(&(sys.force.value(s) + &res.reaction));
    let basis = cs.virtual_basis(s)?;
    let work = virtual_work(&res, &basis)?;
    let scale = 1.0 + res.reaction.amax();
    let mut rep = report(
        "reactions",
        problem,
        opts,
        vec![CheckResult::measured(
            CheckKind::VirtualWork.name(),
            work / scale,
            opts.threshold(CheckKind::VirtualWork),
        )],
    )?;
    let q = |name: &str, v: &DVector<f64>| Quantity {
        name: name.into(),
        values: v.iter().copied().collect(),
    };
    rep.quantities = vec![
        q("t", &DVector::from_element(1, s.t)),
        q("x", &s.x),
        q("v", &s.v),
        q("lambda", &res.multipliers),
        q("N", &res.reaction),
        q("xdd", &xdd),
        q("phi", &cs.eval(s)?),
    ];
    Ok(Outcome {
        report: rep,
        artifacts: vec![],
    })
}

/// Checks run by `check-invariants` when the scenario requests none.
pub fn default_invariant_checks() -> Vec<CheckKind> {
    CheckKind::ALL.into_iter().filter(|c| *c != CheckKind::Equivalence).collect()
}

/// The property suite; each requested check appears exactly once.
pub fn check_invariants(problem: &Problem, opts: &RunOptions) -> Result<Outcome> {
    let mut requested = if problem.scenario.checks.is_empty() {
        default_invariant_checks()
    } else {
        problem.scenario.checks.clone()
    };
    let mut seen = std::collections::BTreeSet::new();
    requested.retain(|c| seen.insert(*c));
    let mut ctx = Context::new(problem, opts);
    let checks = requested.iter().map(|&c| ctx.run(c)).collect::<Result<Vec<_>>>()?;
    let mut artifacts = Vec::new();
    if let Some(traj) = &ctx.first {
        artifacts.push(csv_artifact("trajectory.csv", |b| traj.write_csv(b))?);
    }
    if let Some(traj) = &ctx.second {
        artifacts.push(csv_artifact("generalized.csv", |b| traj.write_csv(b))?);
    }
    Ok(Outcome {
        report: report("check-invariants", problem, opts, checks)?,
        artifacts,
    })
}

/// First- versus second-kind trajectories in the scenario's chart.
pub fn compare_embeddings(problem: &Problem, opts: &RunOptions) -> Result<Outcome> {
    if problem.embedding.is_none() {
        let why = if problem.constraints.is_holonomic() || problem.n() == 0 {
            "the scenario declares no embedding"
        } else {
            "nonholonomic constraints admit no embedding"
        };
        return Err(Error::Config(format!("compare-embeddings: {why}")));
    }
    let mut ctx = Context::new(problem, opts);
    let checks = vec![ctx.run(CheckKind::Equivalence)?, ctx.run(CheckKind::Covariance)?];
    let artifacts = vec![
        csv_artifact("trajectory.csv", |b| ctx.first_kind()?.write_csv(b))?,
        csv_artifact("generalized.csv", |b| ctx.second_kind()?.write_csv(b))?,
    ];
    Ok(Outcome {
        report: report("compare-embeddings", problem, opts, checks)?,
        artifacts,
    })
}

/// Lazily computed runs shared between checks.
struct Context<'a> {
    problem: &'a Problem,
    opts: &'a RunOptions,
    exec: Execution,
    first: Option<Trajectory>,
    second: Option<GeneralizedTrajectory>,
}

impl<'a> Context<'a> {
    fn new(problem: &'a Problem, opts: &'a RunOptions) -> Self {
        Self {
            problem,
            opts,
            exec: opts.execution(),
            first: None,
            second: None,
        }
    }

    fn rng(&self, check: CheckKind) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.opts.seed ^ ((check as u64 + 1) << 32))
    }

    fn first_kind(&mut self) -> Result<&Trajectory> {
        if self.first.is_none() {
            let (cfg, t_end) = self.opts.config(self.problem)?;
            let p = self.problem;
            self.first = Some(integrate_first_kind(&p.system, &p.constraints, &p.initial, t_end, &cfg)?);
        }
        Ok(self.first.as_ref().expect("computed"))
    }

    fn second_kind(&mut self) -> Result<&GeneralizedTrajectory> {
        if self.second.is_none() {
            let (mut cfg, t_end) = self.opts.config(self.problem)?;
            cfg.projection = Projection::Off;
            let p = self.problem;
            let (Some(emb), Some(init)) = (&p.embedding, &p.initial_generalized) else {
                return Err(Error::Config("scenario has no embedding".into()));
            };
            self.second = Some(integrate_second_kind(emb.clone(), &p.system, init, t_end, &cfg)?);
        }
        Ok(self.second.as_ref().expect("computed"))
    }

    fn run(&mut self, check: CheckKind) -> Result<CheckResult> {
        let name = check.name();
        let threshold = self.opts.threshold(check);
        let p = self.problem;
        let constrained = p.n() > 0;
        let no_chart = || {
            if !constrained || p.constraints.is_holonomic() {
                "no embedding declared"
            } else {
                "nonholonomic"
            }
        };
        Ok(match check {
            CheckKind::FirstIntegral => {
                let traj = self.first_kind()?;
                let phi = traj.max_phi();
                let value = traj.max_g().map_or(phi, |g| g.max(phi));
                CheckResult::measured(name, value, threshold).with_detail("max over samples of ‖g‖∞ and ‖φ‖∞")
            }
            CheckKind::GdeResidual => {
                let sys = &p.system;
                let traj = self.first_kind()?;
                let value = traj
                    .samples
                    .iter()
                    .map(|s| s.diagnostics.gde_residual / (1.0 + sys.force.value(&s.state).amax()))
                    .fold(0.0, f64::max);
                CheckResult::measured(name, value, threshold).with_detail("relative to 1 + ‖f‖∞")
            }
            CheckKind::VirtualWork => {
                if !constrained {
                    return Ok(CheckResult::skipped(name, "unconstrained"));
                }
                let mut rng = self.rng(check);
                let states: Vec<State> = (0..VIRTUAL_WORK_STATES)
                    .map(|_| sampling::regular_state(&p.constraints, SAMPLE_BOX, &mut rng))
                    .collect();
                let values = batch::try_map(self.exec, &states, |s| {
                    let res = reactions::reaction(&p.system, &p.constraints, s)?;
                    let basis = p.constraints.virtual_basis(s)?;
                    Ok(virtual_work(&res, &basis)? / (1.0 + res.reaction.amax()))
                })?;
                let value = values.into_iter().fold(0.0, f64::max);
                CheckResult::measured(name, value, threshold)
                    .with_detail(format!("{VIRTUAL_WORK_STATES} random states, relative to 1 + ‖N‖∞"))
            }
            CheckKind::Reparametrization => {
                if !constrained {
                    return Ok(CheckResult::skipped(name, "unconstrained"));
                }
                let mut rng = self.rng(check);
                let states: Vec<State> = (0..INVARIANCE_STATES)
                    .map(|_| sampling::on_manifold_state(&p.constraints, &p.system.mass, SAMPLE_BOX, &mut rng))
                    .collect();
                let n = p.n();
                let maps: Vec<(&str, Arc<dyn Reparametrization>)> = vec![
                    ("identity", Arc::new(IdentityReparam { dim: n })),
                    ("exp-minus-one", Arc::new(ExpMinusOne { dim: n })),
                    ("cubic", Arc::new(CubicReparam { dim: n })),
                    ("linear-mix", Arc::new(LinearMix::random(n, self.opts.seed))),
                ];
                let mut worst = (0.0f64, "identity");
                for (label, map) in maps {
                    let v = invariance_report_with(&p.system, &p.constraints, map, &states, self.exec)?;
                    if !(v <= worst.0) {
                        worst = (v, label);
                    }
                }
                CheckResult::measured(name, worst.0, threshold).with_detail(format!(
                    "{INVARIANCE_STATES} on-manifold states, worst map {}",
                    worst.1
                ))
            }
            CheckKind::Realization => {
                if !constrained {
                    return Ok(CheckResult::skipped(name, "unconstrained"));
                }
                let mut rng = self.rng(check);
                let states: Vec<State> = (0..INVARIANCE_STATES)
                    .map(|_| sampling::regular_state(&p.constraints, SAMPLE_BOX, &mut rng))
                    .collect();
                let ideal = Realization::ideal(&p.constraints);
                let values = batch::try_map(self.exec, &states, |s| {
                    let a = reactions::reaction(&p.system, &p.constraints, s)?;
                    let b = reaction_with_realization(&p.system, &p.constraints, &ideal, s)?;
                    Ok((a.reaction - &b.reaction).amax() / (1.0 + b.reaction.amax()))
                })?;
                CheckResult::measured(name, values.into_iter().fold(0.0, f64::max), threshold)
                    .with_detail("S = φ_v against the closed form, relative to 1 + ‖N‖∞")
            }
            CheckKind::Energy => {
                if p.scenario.constraints.is_rheonomic() {
                    return Ok(CheckResult::skipped(name, "rheonomic constraint, energy is not conserved"));
                }
                if dynamics::energy(&p.system, &p.initial).1.is_none() {
                    return Ok(CheckResult::skipped(name, "force has no potential"));
                }
                let traj = self.first_kind()?;
                let e0 = traj.samples[0].diagnostics.energy();
                CheckResult::measured(name, traj.energy_drift() / (1.0 + e0.abs()), threshold)
                    .with_detail("max |E(t) − E(0)| relative to 1 + |E(0)|")
            }
            CheckKind::Covariance => {
                if p.embedding.is_none() {
                    return Ok(CheckResult::skipped(name, no_chart()));
                }
                match self.second_kind() {
                    Ok(traj) => CheckResult::measured(name, traj.max_covariance_residual(), threshold)
                        .with_detail("along the second-kind run"),
                    Err(e) => CheckResult::failed(name, e.to_string()),
                }
            }
            CheckKind::Decomposition => {
                let (Some(emb), Some(init)) = (&p.embedding, &p.initial_generalized) else {
                    return Ok(CheckResult::skipped(name, no_chart()));
                };
                let lag = pullback_lagrangian(emb.clone(), &p.system.mass)?;
                let (_, t_end) = self.opts.config(p)?;
                let mut rng = self.rng(check);
                let r = emb.dim();
                let mut worst = 0.0f64;
                let mut probes = 0;
                while probes < DECOMPOSITION_PROBES {
                    let t = init.t + rng.gen_range(0.0..=1.0) * (t_end - init.t);
                    let y = DVector::from_fn(r, |i, _| init.y[i] + rng.gen_range(-0.5..0.5));
                    if !emb.in_domain(t, &y) {
                        continue;
                    }
                    let w = DVector::from_fn(r, |_, _| rng.gen_range(-SAMPLE_BOX..SAMPLE_BOX));
                    probes += 1;
                    let parts = match decompose_t(&lag, t, &y) {
                        Ok(parts) => parts,
                        Err(e) => return Ok(CheckResult::failed(name, e.to_string())),
                    };
                    let l = lag.value(t, &y, &w);
                    let split = 0.5 * w.dot(&(&parts.m2 * &w)) + parts.b.dot(&w) + parts.t0;
                    let rel = (l - split).abs() / (1.0 + l.abs());
                    if !(rel <= worst) {
                        worst = rel;
                    }
                }
                CheckResult::measured(name, worst, threshold)
                    .with_detail(format!("{DECOMPOSITION_PROBES} probes, M₂ positive definite at all"))
            }
            CheckKind::Equivalence => {
                let Some(emb) = p.embedding.clone() else {
                    return Ok(CheckResult::skipped(name, no_chart()));
                };
                let exec = self.exec;
                self.first_kind()?;
                if let Err(e) = self.second_kind() {
                    return Ok(CheckResult::failed(name, e.to_string()));
                }
                let (first, second) = (self.first.as_ref().expect("computed"), self.second.as_ref().expect("computed"));
                match match_trajectories(first, &emb, &p.system.mass, second, exec) {
                    Ok(m) => CheckResult::measured(name, m.discrepancy(), threshold).with_detail(format!(
                        "position {:.3e}, velocity {:.3e}, chart inversion {:.3e}",
                        m.position, m.velocity, m.inversion
                    )),
                    Err(e) => CheckResult::failed(name, e.to_string()),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;
    use crate::scenario::catalog_scenario;

    fn problem(name: &str) -> Problem {
        catalog_scenario(name).unwrap().build().unwrap()
    }

    #[test]
    fn state_parsing() {
        let s = parse_state("0,-1,2,0", 2).unwrap();
        assert_eq!((s.t, s.x[1], s.v[0]), (0.0, -1.0, 2.0));
        let s = parse_state("1.5, 0, -1, 2, 0", 2).unwrap();
        assert_eq!(s.t, 1.5);
        assert!(parse_state("0,1,2", 2).is_err());
        assert!(parse_state("0,a,2,0", 2).is_err());
    }

    #[test]
    fn pendulum_reactions() {
        let p = problem("pendulum");
        let s = parse_state("0,-1,2,0", 2).unwrap();
        let out = reactions(&p, Some(&s), &RunOptions::default()).unwrap();
        let q = |n: &str| out.report.quantities.iter().find(|q| q.name == n).unwrap().values.clone();
        assert!((q("lambda")[0] + 14.0).abs() < 1e-12);
        assert!((q("N")[1] - 14.0).abs() < 1e-12 && q("N")[0].abs() < 1e-12);
        assert!(out.report.passed());
    }

    #[test]
    fn knife_edge_suite_skips_chart_checks() {
        let p = problem("knife-edge");
        let opts = RunOptions {
            t_end: Some(1.0),
            ..RunOptions::default()
        };
        let out = check_invariants(&p, &opts).unwrap();
        let r = &out.report;
        assert!(r.passed(), "{}", r.to_text());
        for c in ["covariance", "decomposition"] {
            let check = r.check(c).unwrap();
            assert_eq!(check.status, Status::Skipped);
            assert_eq!(check.detail.as_deref(), Some("skipped: nonholonomic"));
        }
        assert_eq!(r.checks.len(), default_invariant_checks().len());
        assert_eq!(out.artifacts.len(), 1);
        assert!(compare_embeddings(&p, &opts).is_err());
    }

    #[test]
    fn overridden_threshold_fails() {
        let p = problem("pendulum");
        let mut opts = RunOptions {
            t_end: Some(0.5),
            ..RunOptions::default()
        };
        opts.thresholds.insert(CheckKind::FirstIntegral, 0.0);
        let out = simulate(&p, &opts).unwrap();
        assert!(!out.report.passed());
        assert_eq!(out.report.check("first-integral").unwrap().status, Status::Fail);
    }

    #[test]
    fn overrides_reach_the_integrator() {
        let p = problem("pendulum");
        let opts = RunOptions {
            t_end: Some(0.1),
            dt: Some(0.01),
            tol: Some(1e-9),
            ..RunOptions::default()
        };
        let (cfg, t_end) = opts.config(&p).unwrap();
        assert_eq!((cfg.dt, cfg.tol, cfg.projection_tol, t_end), (0.01, 1e-9, 1e-9, 0.1));
        let out = simulate(&p, &opts).unwrap();
        assert_eq!(out.artifacts[0].contents.lines().count(), 12);
        let bad = RunOptions {
            dt: Some(0.0),
            ..RunOptions::default()
        };
        assert!(simulate(&p, &bad).is_err());
    }

    #[test]
    fn parallel_and_sequential_reports_agree() {
        let p = problem("pendulum");
        let seq = RunOptions {
            t_end: Some(0.5),
            ..RunOptions::default()
        };
        let par = RunOptions { jobs: 4, ..seq.clone() };
        let a = check_invariants(&p, &seq).unwrap();
        let b = check_invariants(&p, &par).unwrap();
        let values = |o: &Outcome| o.report.checks.iter().map(|c| c.value).collect::<Vec<_>>();
        assert_eq!(values(&a), values(&b));
        assert_eq!(a.artifacts, b.artifacts);
    }
}
