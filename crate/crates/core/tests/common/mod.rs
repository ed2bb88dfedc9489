//! Test-side oracles: random polynomial charts with exact derivatives and
//! total-derivative Lagrangians.

#![allow(dead_code)]

use std::sync::Arc;

use dalembert::generalized::{Embedding, Jet, QuadraticLagrangian, QuadraticParts, QuadraticPartsDerivatives};
use dalembert::model::Provenance;
use dalembert::MassMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Polynomial in `z = (t, y₁, …, y_r)` as a list of `(coefficient, exponents)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub vars: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Poly {
    pub fn zero(vars: usize) -> Self {
        Self { vars, terms: vec![] }
    }

    /// Random coefficients in `[-1, 1]` on every monomial of total degree
    /// `<= degree`.
    pub fn random(vars: usize, degree: u32, rng: &mut impl Rng) -> Self {
        let mut terms = Vec::new();
        for exps in monomials(vars, degree) {
            terms.push((rng.gen_range(-1.0..1.0), exps));
        }
        Self { vars, terms }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(z).map(|(&k, &x)| x.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn diff(&self, var: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[var] > 0)
            .map(|(c, e)| {
                let mut e2 = e.clone();
                e2[var] -= 1;
                (c * e[var] as f64, e2)
            })
            .collect();
        Poly { vars: self.vars, terms }
    }

    pub fn add(mut self, other: &Poly) -> Poly {
        self.terms.extend(other.terms.iter().cloned());
        self
    }
}

fn monomials(vars: usize, degree: u32) -> Vec<Vec<u32>> {
    if vars == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for k in 0..=degree {
        for mut rest in monomials(vars - 1, degree - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

fn z(t: f64, y: &DVector<f64>) -> Vec<f64> {
    std::iter::once(t).chain(y.iter().copied()).collect()
}

/// `u(t, y)` with polynomial components and exact first and second
/// derivatives. The first `r` components carry `yᵢ` so that `u_y` has full
/// rank near the origin.
pub struct PolyChart {
    pub m: usize,
    pub r: usize,
    pub u: Vec<Poly>,
    du: Vec<Vec<Poly>>,
    ddu: Vec<Vec<Vec<Poly>>>,
}

impl PolyChart {
    pub fn new(m: usize, r: usize, u: Vec<Poly>) -> Self {
        let vars = r + 1;
        let du: Vec<Vec<Poly>> = u.iter().map(|p| (0..vars).map(|v| p.diff(v)).collect()).collect();
        let ddu = du
            .iter()
            .map(|row| row.iter().map(|p| (0..vars).map(|v| p.diff(v)).collect()).collect())
            .collect();
        Self { m, r, u, du, ddu }
    }

    pub fn random(m: usize, r: usize, degree: u32, rng: &mut impl Rng) -> Self {
        let vars = r + 1;
        let u = (0..m)
            .map(|i| {
                let p = Poly::random(vars, degree, rng);
                if i < r {
                    let mut e = vec![0; vars];
                    e[i + 1] = 1;
                    p.add(&Poly {
                        vars,
                        terms: vec![(2.0, e)],
                    })
                } else {
                    p
                }
            })
            .collect();
        Self::new(m, r, u)
    }

    fn first(&self, t: f64, y: &DVector<f64>, var: usize) -> DVector<f64> {
        let z = z(t, y);
        DVector::from_fn(self.m, |i, _| self.du[i][var].eval(&z))
    }

    fn second(&self, t: f64, y: &DVector<f64>, a: usize, b: usize) -> DVector<f64> {
        let z = z(t, y);
        DVector::from_fn(self.m, |i, _| self.ddu[i][a][b].eval(&z))
    }

    fn columns(&self, cols: impl Fn(usize) -> DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.r);
        for j in 0..self.r {
            out.set_column(j, &cols(j));
        }
        out
    }
}

impl Embedding for PolyChart {
    fn ambient_dim(&self) -> usize {
        self.m
    }
    fn dim(&self) -> usize {
        self.r
    }
    fn position(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let z = z(t, y);
        DVector::from_fn(self.m, |i, _| self.u[i].eval(&z))
    }
    fn d_t(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        self.first(t, y, 0)
    }
    fn d_y(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        self.columns(|j| self.first(t, y, j + 1))
    }
    fn d_tt(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        self.second(t, y, 0, 0)
    }
    fn d_ty(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        self.columns(|j| self.second(t, y, j + 1, 0))
    }
    fn d_yy(&self, t: f64, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.r).map(|k| self.columns(|j| self.second(t, y, j + 1, k + 1))).collect()
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// The same chart with second derivatives left to the finite-difference
/// defaults.
pub struct FirstOrderOnly(pub Arc<dyn Embedding>);

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

/// `L = dw/dt = w_t + w_y ẏ` for a polynomial `w(t, y)`.
pub struct TotalDerivative {
    pub r: usize,
    pub w: Poly,
}

impl QuadraticLagrangian for TotalDerivative {
    fn dim(&self) -> usize {
        self.r
    }

    fn parts(&self, t: f64, y: &DVector<f64>) -> QuadraticParts {
        let z = z(t, y);
        QuadraticParts {
            m2: DMatrix::zeros(self.r, self.r),
            b: DVector::from_fn(self.r, |i, _| self.w.diff(i + 1).eval(&z)),
            t0: self.w.diff(0).eval(&z),
        }
    }

    fn derivatives(&self, t: f64, y: &DVector<f64>) -> QuadraticPartsDerivatives {
        let z = z(t, y);
        let r = self.r;
        let d2 = |a: usize, b: usize| self.w.diff(a).diff(b).eval(&z);
        QuadraticPartsDerivatives {
            dm2_dt: DMatrix::zeros(r, r),
            dm2_dy: vec![DMatrix::zeros(r, r); r],
            db_dt: DVector::from_fn(r, |i, _| d2(i + 1, 0)),
            db_dy: DMatrix::from_fn(r, r, |i, k| d2(i + 1, k + 1)),
            dt0_dy: DVector::from_fn(r, |i, _| d2(0, i + 1)),
        }
    }
}

/// Random symmetric positive definite `G = AᵀA + I`.
pub fn random_mass(m: usize, rng: &mut impl Rng) -> MassMatrix {
    let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    MassMatrix::from_matrix(a.transpose() * &a + DMatrix::identity(m, m)).unwrap()
}

pub fn random_vector(k: usize, half_width: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.gen_range(-half_width..half_width))
}

pub fn random_jet(r: usize, rng: &mut impl Rng) -> Jet {
    Jet {
        t: rng.gen_range(-1.0..1.0),
        y: random_vector(r, 1.0, rng),
        w: random_vector(r, 1.0, rng),
        a: random_vector(r, 1.0, rng),
    }
}
