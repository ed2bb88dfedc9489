//! Explicit Runge–Kutta drivers shared by the first- and second-kind
//! integrations: classical RK4 on a uniform grid and Dormand–Prince 5(4)
//! with step-size control.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4,
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" | "rk4-fixed" => Ok(Method::Rk4),
            "rk45" | "rk45-adaptive" => Ok(Method::Rk45),
            other => Err(Error::Config(format!("unknown method `{other}` (rk4 | rk45)"))),
        }
    }
}

/// Drift control applied after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    Off,
    Positional,
    #[serde(rename = "positional+velocity")]
    PositionalVelocity,
}

impl std::str::FromStr for Projection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Projection::Off),
            "positional" => Ok(Projection::Positional),
            "positional+velocity" => Ok(Projection::PositionalVelocity),
            other => Err(Error::Config(format!(
                "unknown projection `{other}` (off | positional | positional+velocity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    /// Relative and absolute local error tolerance for RK45.
    pub tol: f64,
    pub projection: Projection,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            tol: 1e-10,
            projection: Projection::Off,
            projection_tol: 1e-12,
            projection_max_iter: 20,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive (got {v})")))
            }
        };
        positive("dt", self.dt)?;
        positive("tol", self.tol)?;
        positive("projection_tol", self.projection_tol)?;
        if self.projection_max_iter == 0 {
            return Err(Error::Config("projection_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Right-hand side `ẏ = F(t, y)` of a first-order system.
pub(crate) trait Rhs {
    fn eval(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> Rhs for F
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    fn eval(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        self(t, y)
    }
}

pub(crate) fn rk4_step(f: &impl Rhs, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = f.eval(t, y)?;
    let k2 = f.eval(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f.eval(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f.eval(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step: fifth-order solution and embedded error estimate.
pub(crate) fn dopri_step(f: &impl Rhs, t: f64, y: &DVector<f64>, h: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[stage][j] != 0.0 {
                yi += kj * (h * A[stage][j]);
            }
        }
        k.push(f.eval(t + C[stage] * h, &yi)?);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for (i, ki) in k.iter().enumerate() {
        y5 += ki * (h * B5[i]);
        err += ki * (h * (B5[i] - B4[i]));
    }
    Ok((y5, err))
}

/// Integrate from `(t0, y0)` to `t_end`, calling `accept` after every
/// accepted step. `accept` may replace the state (projection) and returns
/// the state the integration continues from.
pub(crate) fn drive(
    cfg: &IntegratorConfig,
    f: &impl Rhs,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    mut accept: impl FnMut(f64, DVector<f64>) -> Result<DVector<f64>>,
) -> Result<()> {
    cfg.validate()?;
    if !(t_end >= t0) {
        return Err(Error::Config(format!("t_end {t_end} precedes t0 {t0}")));
    }
    let span = t_end - t0;
    match cfg.method {
        Method::Rk4 => {
            let steps = ((span / cfg.dt) - 1e-9).ceil().max(0.0) as usize;
            let h = if steps > 0 { span / steps as f64 } else { 0.0 };
            let mut y = y0;
            for k in 0..steps {
                let t = t0 + k as f64 * h;
                let next = rk4_step(f, t, &y, h)?;
                let t_next = if k + 1 == steps { t_end } else { t0 + (k + 1) as f64 * h };
                y = accept(t_next, next)?;
            }
            Ok(())
        }
        Method::Rk45 => {
            let h_min = 1e-14 * span.max(1.0);
            let mut t = t0;
            let mut y = y0;
            let mut h = cfg.dt.min(span);
            while t < t_end {
                if t + h > t_end {
                    h = t_end - t;
                }
                let (y5, err) = dopri_step(f, t, &y, h)?;
                let scaled = err
                    .iter()
                    .zip(y.iter().zip(y5.iter()))
                    .map(|(e, (a, b))| e / (cfg.tol * (1.0 + a.abs().max(b.abs()))))
                    .fold(0.0f64, |acc, r| acc.max(r.abs()));
                if scaled <= 1.0 {
                    t = if t_end - (t + h) <= h_min { t_end } else { t + h };
                    y = accept(t, y5)?;
                }
                let factor = if scaled == 0.0 { 5.0 } else { (0.9 * scaled.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if h < h_min && t < t_end {
                    return Err(Error::StepFailure { t, h });
                }
            }
            Ok(())
        }
    }
}
