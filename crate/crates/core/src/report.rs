//! Check reports: one line per check with its measured value and threshold,
//! rendered as text or JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::integrate::{IntegratorConfig, Method, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    /// Passes iff `value <= threshold` (NaN fails).
    pub fn measured(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            status: if value <= threshold { Status::Pass } else { Status::Fail },
            value: Some(value),
            threshold: Some(threshold),
            detail: None,
        }
    }

    pub fn skipped(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            value: None,
            threshold: None,
            detail: Some(format!("skipped: {}", reason.into())),
        }
    }

    pub fn failed(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            value: None,
            threshold: None,
            detail: Some(reason.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub method: Method,
    pub dt: f64,
    pub tol: f64,
    pub projection: Projection,
    pub t_end: f64,
    pub jobs: usize,
    pub parallel: bool,
    pub seed: u64,
}

impl Environment {
    pub fn new(cfg: &IntegratorConfig, t_end: f64, jobs: usize, parallel: bool, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            method: cfg.method,
            dt: cfg.dt,
            tol: cfg.tol,
            projection: cfg.projection,
            t_end,
            jobs,
            parallel,
            seed,
        }
    }
}

/// Named vector output, e.g. multipliers of a single-state evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub scenario: String,
    pub environment: Environment,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quantities: Vec<Quantity>,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let env = &self.environment;
        let mut out = String::new();
        let method = match env.method {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        };
        let projection = match env.projection {
            Projection::Off => "off",
            Projection::Positional => "positional",
            Projection::PositionalVelocity => "positional+velocity",
        };
        let _ = writeln!(out, "dalembert {} {} {}", env.version, self.command, self.scenario);
        let _ = writeln!(
            out,
            "method={method} dt={:e} tol={:e} projection={projection} t_end={} jobs={} parallel={} seed={}",
            env.dt, env.tol, env.t_end, env.jobs, env.parallel, env.seed
        );
        for q in &self.quantities {
            let vals: Vec<String> = q.values.iter().map(|v| format!("{v:.12e}")).collect();
            let _ = writeln!(out, "{} = [{}]", q.name, vals.join(", "));
        }
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            let _ = write!(out, "{tag}  {:width$}", c.name);
            if let (Some(v), Some(t)) = (c.value, c.threshold) {
                let _ = write!(out, "  value={v:.3e}  threshold={t:.0e}");
            }
            if let Some(d) = &c.detail {
                let _ = write!(out, "  {d}");
            }
            out.push('\n');
        }
        let count = |s: Status| self.checks.iter().filter(|c| c.status == s).count();
        let _ = writeln!(
            out,
            "result: {} ({} passed, {} failed, {} skipped)",
            if self.passed() { "PASS" } else { "FAIL" },
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skipped)
        );
        out
    }
}
