use nalgebra::DVector;

use crate::error::{Error, Result};

/// A point `(t, x, v)` of the extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl State {
    pub fn new(t: f64, x: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Config("configuration vector must not be empty".into()));
        }
        crate::error::ensure_len("velocity", x.len(), v.len())?;
        if !t.is_finite() || x.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Config("state entries must be finite".into()));
        }
        Ok(Self { t, x, v })
    }

    pub fn from_slices(t: f64, x: &[f64], v: &[f64]) -> Result<Self> {
        Self::new(t, DVector::from_column_slice(x), DVector::from_column_slice(v))
    }

    /// Configuration dimension `m`.
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Same point with a different velocity.
    pub fn with_velocity(&self, v: DVector<f64>) -> Self {
        Self {
            t: self.t,
            x: self.x.clone(),
            v,
        }
    }

    /// Concatenated `(x, v)` for first-order integrators.
    pub(crate) fn phase(&self) -> DVector<f64> {
        let m = self.dim();
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&self.x);
        out.rows_mut(m, m).copy_from(&self.v);
        out
    }

    pub(crate) fn from_phase(t: f64, phase: &DVector<f64>) -> Self {
        let m = phase.len() / 2;
        Self {
            t,
            x: phase.rows(0, m).into_owned(),
            v: phase.rows(m, m).into_owned(),
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}
