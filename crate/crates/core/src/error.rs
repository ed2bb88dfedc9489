use std::fmt;

use thiserror::Error;

/// Argument slot of a map evaluated on the extended phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    T,
    X,
    V,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::T => f.write_str("t"),
            Slot::X => f.write_str("x"),
            Slot::V => f.write_str("v"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("mass {index} must be positive (got {value})")]
    NonPositiveMass { index: usize, value: f64 },

    #[error("matrix is not symmetric positive definite ({reason})")]
    NotSpd { reason: String },

    #[error("non-finite value while evaluating {what} at stencil point {point:?} (slot {slot})")]
    NonFinite {
        what: String,
        slot: Slot,
        point: Vec<f64>,
    },

    #[error("constraint Jacobian lost rank at t = {t}: smallest singular value {sigma_min:e} <= {threshold:e}")]
    Regularity {
        t: f64,
        sigma_min: f64,
        threshold: f64,
    },

    #[error("singular matrix in {what} at t = {t} (smallest singular value {sigma_min:e})")]
    Singular { what: String, t: f64, sigma_min: f64 },

    #[error("initial {residual} residual {value:e} exceeds {tol:e}")]
    OffManifold {
        residual: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("{0} requires a holonomic constraint set")]
    NotHolonomic(&'static str),

    #[error("holonomic generator depends on velocity (|dg/dv| = {0:e} at probe point)")]
    VelocityDependent(f64),

    #[error("reparametrization violates its invariants: {0}")]
    BadReparametrization(String),

    #[error("projection did not converge in {iterations} iterations (residual {residual:e})")]
    ProjectionDiverged { iterations: usize, residual: f64 },

    #[error("chart degenerates at t = {t}, y = {y:?}: {reason}")]
    ChartDegenerate { t: f64, y: Vec<f64>, reason: String },

    #[error("y = {y:?} at t = {t} leaves the chart domain")]
    OutsideChart { t: f64, y: Vec<f64> },

    #[error("chart inversion failed at t = {t} (residual {residual:e})")]
    ChartInversion { t: f64, residual: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("evaluation at a state other than the one the basis was computed at")]
    StateMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown scenario `{name}` (available: {})", available.join(", "))]
    UnknownScenario {
        name: String,
        available: Vec<String>,
    },

    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Scenario(Vec<String>),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: what.to_string(),
            expected,
            got,
        })
    }
}
