use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Outcome of [`check_spd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdVerdict {
    /// `‖M − Mᵀ‖_∞ / ‖M‖_∞` (zero for the zero matrix).
    pub asymmetry: f64,
    pub symmetric: bool,
    pub cholesky: bool,
}

impl SpdVerdict {
    pub fn passed(&self) -> bool {
        self.symmetric && self.cholesky
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|c| c.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Symmetry to `tol` relative in the ∞-norm, then a Cholesky attempt.
pub fn check_spd(m: &DMatrix<f64>, tol: f64) -> SpdVerdict {
    assert!(m.is_square(), "check_spd needs a square matrix");
    let scale = inf_norm(m);
    let diff = inf_norm(&(m - m.transpose()));
    let asymmetry = if scale > 0.0 { diff / scale } else { diff };
    let symmetric = diff <= tol * scale;
    let cholesky = m.nrows() == 0 || (symmetric && Cholesky::new(m.clone()).is_some());
    SpdVerdict {
        asymmetry,
        symmetric,
        cholesky,
    }
}

/// Constant symmetric positive definite mass matrix `G`.
#[derive(Clone)]
pub struct MassMatrix {
    g: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    masses: Option<Vec<f64>>,
}

impl std::fmt::Debug for MassMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MassMatrix")
            .field("g", &self.g)
            .field("masses", &self.masses)
            .finish()
    }
}

impl PartialEq for MassMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.g == other.g && self.masses == other.masses
    }
}

impl MassMatrix {
    /// `diag(m₁,m₁,m₁,…,m_ν,m_ν,m_ν)` for ν point masses in space.
    pub fn from_point_masses(masses: &[f64]) -> Result<Self> {
        check_positive(masses)?;
        let diag: Vec<f64> = masses.iter().flat_map(|&m| [m, m, m]).collect();
        let mut out = Self::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(diag)))?;
        out.masses = Some(masses.to_vec());
        Ok(out)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        check_positive(diag)?;
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || g.nrows() == 0 {
            return Err(Error::NotSpd {
                reason: format!("shape {}x{}", g.nrows(), g.ncols()),
            });
        }
        let verdict = check_spd(&g, 1e-12);
        if !verdict.symmetric {
            return Err(Error::NotSpd {
                reason: format!("relative asymmetry {:e}", verdict.asymmetry),
            });
        }
        let chol = Cholesky::new(g.clone()).ok_or_else(|| Error::NotSpd {
            reason: "Cholesky factorization failed".into(),
        })?;
        Ok(Self {
            g,
            chol,
            masses: None,
        })
    }

    pub fn identity(m: usize) -> Self {
        Self::from_matrix(DMatrix::identity(m, m)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Point masses the matrix was built from, if any.
    pub fn point_masses(&self) -> Option<&[f64]> {
        self.masses.as_deref()
    }

    /// `G⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `G⁻¹ B` for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `½ vᵀ G v`.
    pub fn kinetic_energy(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.g * v))
    }
}

fn check_positive(masses: &[f64]) -> Result<()> {
    if masses.is_empty() {
        return Err(Error::Config("mass list must not be empty".into()));
    }
    match masses.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
        Some(index) => Err(Error::NonPositiveMass {
            index,
            value: masses[index],
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn single_unit_mass() {
        let g = MassMatrix::from_point_masses(&[1.0]).unwrap();
        assert_eq!(g.dim(), 3);
        assert_eq!(g.matrix(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn two_masses_repeat_three_times() {
        let g = MassMatrix::from_point_masses(&[2.0, 3.0]).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 2.0, 3.0, 3.0, 3.0]));
        assert_eq!(g.matrix(), &want);
        assert_eq!(g.point_masses(), Some(&[2.0, 3.0][..]));
    }

    #[test]
    fn zero_mass_names_the_offender() {
        let err = MassMatrix::from_point_masses(&[1.0, 0.0]).unwrap_err();
        assert_eq!(err.to_string(), "mass 1 must be positive (got 0)");
    }

    #[test]
    fn spd_verdicts() {
        assert!(check_spd(&DMatrix::identity(3, 3), 1e-12).passed());
        assert!(!check_spd(&dmatrix![1.0, 0.0; 0.0, -1.0], 1e-12).passed());
        assert!(!check_spd(&dmatrix![1.0, 0.5; 0.0, 1.0], 1e-12).passed());

        let b = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        let bgbt = &b * g * b.transpose();
        assert_eq!(bgbt, dmatrix![2.0, 0.0; 0.0, 3.0]);
        assert!(check_spd(&bgbt, 1e-12).passed());
    }

    #[test]
    fn construction_is_pure() {
        let a = MassMatrix::from_point_masses(&[1.5, 0.25]).unwrap();
        let b = MassMatrix::from_point_masses(&[1.5, 0.25]).unwrap();
        let bits = |m: &MassMatrix| m.matrix().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn solve_inverts_g() {
        let g = MassMatrix::from_matrix(dmatrix![2.0, 1.0; 1.0, 3.0]).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let x = g.solve(&b);
        assert!((g.matrix() * x - b).norm() < 1e-14);
    }
}
