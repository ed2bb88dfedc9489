use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::State;
use crate::error::{Error, Result, Slot};

/// Where a map's derivatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// A smooth vector-valued function on the extended phase space together
/// with its partial derivatives. Derivatives default to central finite
/// differences; implementors override them with closed forms.
pub trait SmoothMap: Send + Sync {
    /// Output dimension `k`.
    fn dim(&self) -> usize;

    fn value(&self, s: &State) -> DVector<f64>;

    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        Ok(fd_jacobian(self, s, Slot::T)?.column(0).into_owned())
    }

    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        fd_jacobian(self, s, Slot::X)
    }

    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        fd_jacobian(self, s, Slot::V)
    }

    fn provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
}

/// Step used for the central difference at coordinate value `c`:
/// `cbrt(ε)·max(1, |c|)`.
pub fn fd_step(c: f64) -> f64 {
    f64::EPSILON.cbrt() * c.abs().max(1.0)
}

/// Central-difference Jacobian of `map` with respect to one argument slot.
/// The `t` slot yields a `k×1` matrix.
pub fn fd_jacobian<M: SmoothMap + ?Sized>(map: &M, s: &State, slot: Slot) -> Result<DMatrix<f64>> {
    let k = map.dim();
    let cols = match slot {
        Slot::T => 1,
        Slot::X | Slot::V => s.dim(),
    };
    let mut jac = DMatrix::zeros(k, cols);
    for j in 0..cols {
        let c = match slot {
            Slot::T => s.t,
            Slot::X => s.x[j],
            Slot::V => s.v[j],
        };
        let h = fd_step(c);
        let (plus, minus) = (shifted(s, slot, j, c + h), shifted(s, slot, j, c - h));
        let fp = checked_value(map, &plus, slot)?;
        let fm = checked_value(map, &minus, slot)?;
        let width = (c + h) - (c - h);
        jac.column_mut(j).copy_from(&((fp - fm) / width));
    }
    Ok(jac)
}

fn shifted(s: &State, slot: Slot, j: usize, c: f64) -> State {
    let mut out = s.clone();
    match slot {
        Slot::T => out.t = c,
        Slot::X => out.x[j] = c,
        Slot::V => out.v[j] = c,
    }
    out
}

fn checked_value<M: SmoothMap + ?Sized>(map: &M, s: &State, slot: Slot) -> Result<DVector<f64>> {
    let out = map.value(s);
    crate::error::ensure_len("map output", map.dim(), out.len())?;
    if out.iter().all(|c| c.is_finite()) {
        Ok(out)
    } else {
        let mut point = vec![s.t];
        point.extend(s.x.iter());
        point.extend(s.v.iter());
        Err(Error::NonFinite {
            what: "smooth map".into(),
            slot,
            point,
        })
    }
}

type ValueFn = Arc<dyn Fn(&State) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

/// Closure-backed [`SmoothMap`]. Any derivative left unset falls back to
/// finite differences.
#[derive(Clone)]
pub struct FnMap {
    dim: usize,
    value: ValueFn,
    d_t: Option<ValueFn>,
    d_x: Option<MatrixFn>,
    d_v: Option<MatrixFn>,
}

impl FnMap {
    pub fn new(dim: usize, value: impl Fn(&State) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            d_t: None,
            d_x: None,
            d_v: None,
        }
    }

    pub fn with_d_t(mut self, f: impl Fn(&State) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.d_t = Some(Arc::new(f));
        self
    }

    pub fn with_d_x(mut self, f: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.d_x = Some(Arc::new(f));
        self
    }

    pub fn with_d_v(mut self, f: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.d_v = Some(Arc::new(f));
        self
    }
}

impl SmoothMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, s: &State) -> DVector<f64> {
        (self.value)(s)
    }

    fn d_t(&self, s: &State) -> Result<DVector<f64>> {
        match &self.d_t {
            Some(f) => Ok(f(s)),
            None => Ok(fd_jacobian(self, s, Slot::T)?.column(0).into_owned()),
        }
    }

    fn d_x(&self, s: &State) -> Result<DMatrix<f64>> {
        match &self.d_x {
            Some(f) => Ok(f(s)),
            None => fd_jacobian(self, s, Slot::X),
        }
    }

    fn d_v(&self, s: &State) -> Result<DMatrix<f64>> {
        match &self.d_v {
            Some(f) => Ok(f(s)),
            None => fd_jacobian(self, s, Slot::V),
        }
    }

    fn provenance(&self) -> Provenance {
        if self.d_t.is_some() && self.d_x.is_some() && self.d_v.is_some() {
            Provenance::Analytic
        } else {
            Provenance::FiniteDifference
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn square_has_derivative_six_at_three() {
        let sq = FnMap::new(1, |s: &State| dvector![s.x[0] * s.x[0]]);
        let s = State::from_slices(0.0, &[3.0], &[0.0]).unwrap();
        let j = fd_jacobian(&sq, &s, Slot::X).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-9);
        assert_eq!(sq.provenance(), Provenance::FiniteDifference);
    }

    #[test]
    fn affine_in_velocity_is_exact() {
        let a = dmatrix![1.0, -2.0, 0.5; 0.0, 3.0, 4.0];
        let a2 = a.clone();
        let map = FnMap::new(2, move |s: &State| dvector![1.0, -1.0] + &a2 * &s.v);
        let s = State::from_slices(0.0, &[0.1, 0.2, 0.3], &[1.0, 2.0, -3.0]).unwrap();
        let j = fd_jacobian(&map, &s, Slot::V).unwrap();
        // rounding in the stencil is amplified by 1/h
        assert!((j - a).amax() < 1e-9);
    }

    #[test]
    fn pendulum_lift_velocity_jacobian() {
        let phi = FnMap::new(1, |s: &State| dvector![s.x[0] * s.v[0] + s.x[1] * s.v[1]]);
        let s = State::from_slices(0.0, &[0.0, -1.0], &[2.0, 0.0]).unwrap();
        let j = fd_jacobian(&phi, &s, Slot::V).unwrap();
        assert!((j - dmatrix![0.0, -1.0]).amax() < 1e-9);
    }

    #[test]
    fn stencil_failure_carries_the_point() {
        let ln = FnMap::new(1, |s: &State| dvector![s.x[0].ln()]);
        let s = State::from_slices(0.0, &[0.0], &[0.0]).unwrap();
        match fd_jacobian(&ln, &s, Slot::X) {
            Err(Error::NonFinite { slot, point, .. }) => {
                assert_eq!(slot, Slot::X);
                assert_eq!(point.len(), 3);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn time_slot_is_a_column() {
        let map = FnMap::new(2, |s: &State| dvector![s.t.sin(), s.t * s.x[0]]);
        let s = State::from_slices(0.3, &[2.0], &[0.0]).unwrap();
        let j = fd_jacobian(&map, &s, Slot::T).unwrap();
        assert_eq!(j.shape(), (2, 1));
        assert!((j[(0, 0)] - 0.3f64.cos()).abs() < 1e-9);
        assert!((j[(1, 0)] - 2.0).abs() < 1e-9);
    }
}
