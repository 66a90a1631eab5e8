//! Resolvent entries `R_jk(β, s) = (R(β,s) P₁(v₁χ_j), v₁χ_k)` with
//! `R(β,s) = (L − βP₁ − i s P₁v₁P₁)⁻¹` on `N₀^⊥`.

use nalgebra::{Dyn, LU};

use crate::collision::CollisionOperator;
use crate::error::{Result, VpbError};
use crate::linalg::to_complex;
use crate::{CMat, CVec, Complex, RMat, RVec};

/// Operator data shared by all resolvent evaluations.
#[derive(Debug, Clone)]
pub struct Resolvent<'a> {
    pub op: &'a CollisionOperator,
    l: CMat,
    p0: CMat,
    p1: CMat,
    p1v1p1: CMat,
    /// `P₁(v₁χ_j)` for j = 0..4.
    pub sources: Vec<RVec>,
    /// `v₁χ_k` for k = 0..4.
    pub tests: Vec<RVec>,
}

/// LU factorization of `L − βP₁ − isP₁v₁P₁ + P₀` at one `(β, s)`.
pub struct Factored<'r, 'a> {
    res: &'r Resolvent<'a>,
    a: CMat,
    lu: LU<Complex, Dyn, Dyn>,
    pub beta: Complex,
    pub s: f64,
}

impl<'a> Resolvent<'a> {
    pub fn new(op: &'a CollisionOperator) -> Self {
        let basis = &op.basis;
        let p1r: RMat = basis.p1();
        let v1 = basis.mult(0);
        let p1v1p1 = &p1r * v1 * &p1r;
        let sources = basis.chi.iter().map(|c| &p1r * (v1 * c)).collect();
        let tests = basis.chi.iter().map(|c| v1 * c).collect();
        Self {
            op,
            l: op.l_matrix.map(|x| Complex::new(x, 0.0)),
            p0: basis.p0().map(|x| Complex::new(x, 0.0)),
            p1: p1r.map(|x| Complex::new(x, 0.0)),
            p1v1p1: p1v1p1.map(|x| Complex::new(x, 0.0)),
            sources,
            tests,
        }
    }

    pub fn matrix(&self, beta: Complex, s: f64) -> CMat {
        &self.l - &self.p1 * beta - &self.p1v1p1 * Complex::new(0.0, s) + &self.p0
    }

    pub fn factor(&self, beta: Complex, s: f64) -> Result<Factored<'_, 'a>> {
        if !(beta.re > -self.op.mu_estimate) {
            return Err(VpbError::InvalidArgument(format!(
                "resolvent requested at Re beta = {} <= -mu = {}",
                beta.re, -self.op.mu_estimate
            )));
        }
        let a = self.matrix(beta, s);
        let lu = a.clone().lu();
        Ok(Factored { res: self, a, lu, beta, s })
    }

    pub fn entry(&self, j: usize, k: usize, beta: Complex, s: f64) -> Result<Complex> {
        self.factor(beta, s)?.entry(j, k)
    }
}

impl Factored<'_, '_> {
    pub fn solve(&self, rhs: &CVec) -> Result<CVec> {
        let u = self
            .lu
            .solve(rhs)
            .ok_or_else(|| VpbError::Solve(format!("resolvent singular at beta = {}", self.beta)))?;
        let r = (&self.a * &u - rhs).norm();
        let scale = rhs.norm().max(f64::MIN_POSITIVE);
        if r > 1e-10 * scale {
            return Err(VpbError::Solve(format!(
                "resolvent residual {r:e} at beta = {}, s = {}",
                self.beta, self.s
            )));
        }
        Ok(u)
    }

    /// `R(β,s) P₁(v₁χ_j)`.
    pub fn response(&self, j: usize) -> Result<CVec> {
        self.solve(&to_complex(&self.res.sources[j]))
    }

    pub fn pair(u: &CVec, test: &RVec) -> Complex {
        u.iter().zip(test.iter()).map(|(a, b)| a * *b).sum()
    }

    pub fn entry(&self, j: usize, k: usize) -> Result<Complex> {
        Ok(Self::pair(&self.response(j)?, &self.res.tests[k]))
    }

    /// `∂_β R_jk = (R P₁ R P₁(v₁χ_j), v₁χ_k)`.
    pub fn d_entry(&self, j: usize, k: usize) -> Result<Complex> {
        let u = self.response(j)?;
        let w = self.solve(&(&self.res.p1 * u))?;
        Ok(Self::pair(&w, &self.res.tests[k]))
    }
}

/// `(L⁻¹P₁(v₁χ_j), v₁χ_k)` through the micro-space inverse of `L`.
pub fn linv_entry(op: &CollisionOperator, j: usize, k: usize) -> Result<f64> {
    let basis = &op.basis;
    let v1 = basis.mult(0);
    let src = basis.micro_part(&(v1 * &basis.chi[j]));
    let u = op.solve_linv(&src)?;
    Ok(u.dot(&(v1 * &basis.chi[k])))
}
