//! Closed-form small-frequency data of the five hydrodynamic branches.
//!
//! Branches are indexed `j ∈ {−1, 0, 1, 2, 3}` and stored in that order.

use nalgebra::DVector;

use crate::collision::CollisionOperator;
use crate::dispersion::resolvent::linv_entry;
use crate::error::Result;
use crate::velocity_space::VelocityBasis;
use crate::{Complex, RMat, RVec};

pub const BRANCHES: [i32; 5] = [-1, 0, 1, 2, 3];

pub fn slot(j: i32) -> usize {
    assert!((-1..=3).contains(&j), "branch index {j} outside -1..=3");
    (j + 1) as usize
}

/// Diagonal entries `(L⁻¹P₁(v₁χ_j), v₁χ_j)` for j = 1, 2, 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearResponse {
    pub r11: f64,
    pub r22: f64,
    pub r44: f64,
}

impl LinearResponse {
    pub fn from_operator(op: &CollisionOperator) -> Result<Self> {
        Ok(Self {
            r11: linv_entry(op, 1, 1)?,
            r22: linv_entry(op, 2, 2)?,
            r44: linv_entry(op, 4, 4)?,
        })
    }

    pub fn kappa0(&self) -> f64 {
        -self.r22
    }

    pub fn kappa1(&self) -> f64 {
        -self.r44
    }

    pub fn kappa11(&self) -> f64 {
        -self.r11
    }
}

/// `η_j(s)`.
pub fn eta(j: i32, s: f64) -> Complex {
    let w = (1.0 + 5.0 * s * s / 3.0).sqrt();
    match j {
        -1 => Complex::new(0.0, -w),
        1 => Complex::new(0.0, w),
        _ => Complex::new(0.0, 0.0),
    }
}

/// `b_j(s)`, the second-order decay coefficients.
pub fn b_coeff(j: i32, s: f64, r: &LinearResponse) -> f64 {
    let s2 = s * s;
    match j {
        0 => 3.0 * (s2 + s2 * s2) / (3.0 + 5.0 * s2) * r.kappa1(),
        -1 | 1 => 0.5 * s2 * r.kappa11() + s2 * s2 / (3.0 + 5.0 * s2) * r.kappa1(),
        _ => s2 * r.kappa0(),
    }
}

/// `(a, b, c)` with `h_j = a χ₀ + b χ₁ + c χ₄` for j ∈ {−1, 0, 1} at `ξ = s e₁`.
pub fn macro_coeffs(j: i32, s: f64) -> [f64; 3] {
    let s2 = s * s;
    let d = (3.0 + 5.0 * s2).sqrt();
    match j {
        0 => [
            2f64.sqrt() * s2 / (d * (1.0 + s2).sqrt()),
            0.0,
            -(3.0 + 3.0 * s2).sqrt() / d,
        ],
        -1 | 1 => [
            (1.5f64).sqrt() * s / d,
            -(j as f64) * 0.5f64.sqrt(),
            s / d,
        ],
        _ => [0.0; 3],
    }
}

/// `h_j(s e₁)` as a coefficient vector.
pub fn h_canonical(j: i32, s: f64, basis: &VelocityBasis) -> RVec {
    match j {
        2 => basis.chi[2].clone(),
        3 => basis.chi[3].clone(),
        _ => {
            let [a, b, c] = macro_coeffs(j, s);
            &basis.chi[0] * a + &basis.chi[1] * b + &basis.chi[4] * c
        }
    }
}

/// `h_j(ξ)` for a general wave vector, via the basis rotation that maps `ξ̂` to `e₁`.
pub fn h_xi(j: i32, s: f64, pushforward: &RMat, basis: &VelocityBasis) -> RVec {
    pushforward * h_canonical(j, s, basis)
}

#[derive(Debug, Clone)]
pub struct AsymptoticCoefficients {
    pub s: f64,
    pub response: LinearResponse,
    pub eta: [Complex; 5],
    pub b: [f64; 5],
    /// `h_j(s e₁)`.
    pub h: [RVec; 5],
    /// Leading macroscopic parts `g_j(s)` of the branch eigenfunctions.
    pub g: [RVec; 5],
}

impl AsymptoticCoefficients {
    pub fn new(s: f64, response: LinearResponse, basis: &VelocityBasis) -> Self {
        let h: [RVec; 5] = std::array::from_fn(|i| h_canonical(BRANCHES[i], s, basis));
        Self {
            s,
            response,
            eta: std::array::from_fn(|i| eta(BRANCHES[i], s)),
            b: std::array::from_fn(|i| b_coeff(BRANCHES[i], s, &response)),
            g: h.clone(),
            h,
        }
    }

    /// Leading-order branch eigenvalue `εη_j − ε²b_j`.
    pub fn seed(&self, j: i32, eps: f64) -> Complex {
        let i = slot(j);
        self.eta[i] * eps - eps * eps * self.b[i]
    }

    /// `i ε s L⁻¹ P₁(v₁ g_j)`, the leading microscopic part.
    pub fn micro_leading(&self, j: i32, eps: f64, op: &CollisionOperator) -> Result<DVector<Complex>> {
        let basis = &op.basis;
        let src = basis.micro_part(&(basis.mult(0) * &self.g[slot(j)]));
        let u = op.solve_linv(&src)?;
        Ok(u.map(|x| Complex::new(0.0, eps * self.s * x)))
    }
}
