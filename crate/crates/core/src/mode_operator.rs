//! Per-Fourier-mode operator `B_ε(ξ) = L − iε(v·ξ) − iε (v·ξ/|ξ|²) P_d`.
//!
//! With the metric `G_ξ = I + |ξ|^{-2} e₀e₀ᵀ` of `(·,·)_ξ` the operator reads
//! `L − iε V_ξ G_ξ`, where `V_ξ` is the Galerkin matrix of `v·ξ`.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::collision::CollisionOperator;
use crate::error::{Result, VpbError};
use crate::linalg::to_complex_mat;
use crate::velocity_space::weighted_inner_unchecked;
use crate::{CMat, CVec, Complex, RMat};

#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub xi: [f64; 3],
    pub s: f64,
    pub eps: f64,
    pub b_matrix: CMat,
    pub metric: RMat,
    /// Proper rotation with `O ξ̂ = e₁`.
    pub rotation: Matrix3<f64>,
    pub collision: Arc<CollisionOperator>,
}

/// `(|ξ|, O)` with `O` a proper rotation mapping `ξ/|ξ|` to `e₁`: a Householder
/// reflection followed by `v₃ ↦ −v₃`.
pub fn reduce_to_1d(xi: [f64; 3]) -> Result<(f64, Matrix3<f64>)> {
    let x = Vector3::from(xi);
    let s = x.norm();
    if !(s > 0.0) {
        return Err(VpbError::InvalidArgument("wave vector must be nonzero".into()));
    }
    let u = x / s - Vector3::x();
    let un = u.norm();
    if un < 1e-14 {
        return Ok((s, Matrix3::identity()));
    }
    let u = u / un;
    let h = Matrix3::identity() - u * u.transpose() * 2.0;
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    Ok((s, flip * h))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(VpbError::InvalidArgument(format!(
            "Knudsen parameter must lie in (0,1), got {eps}"
        )));
    }
    Ok(())
}

/// Matrix of `B_ε(ξ)` without argument checks beyond `ξ ≠ 0`; `eps` may be any real.
pub fn b_matrix_raw(op: &CollisionOperator, xi: [f64; 3], eps: f64) -> CMat {
    let basis = &op.basis;
    let s2 = xi.iter().map(|x| x * x).sum::<f64>();
    let mut vg = basis.mult_dir(xi);
    // V_ξ G: column 0 picks up the factor 1 + 1/|ξ|²
    let f = 1.0 + 1.0 / s2;
    for r in 0..basis.dim {
        vg[(r, 0)] *= f;
    }
    let l = to_complex_mat(&op.l_matrix);
    l - to_complex_mat(&vg) * Complex::new(0.0, eps)
}

pub fn assemble_b(op: &Arc<CollisionOperator>, xi: [f64; 3], eps: f64) -> Result<ModeOperator> {
    check_eps(eps)?;
    let (s, rotation) = reduce_to_1d(xi)?;
    Ok(ModeOperator {
        xi,
        s,
        eps,
        b_matrix: b_matrix_raw(op, xi, eps),
        metric: op.basis.metric(s),
        rotation,
        collision: op.clone(),
    })
}

impl ModeOperator {
    pub fn dim(&self) -> usize {
        self.b_matrix.nrows()
    }

    /// The same mode rotated onto `|ξ| e₁`.
    pub fn canonical(&self) -> ModeOperator {
        ModeOperator {
            xi: [self.s, 0.0, 0.0],
            s: self.s,
            eps: self.eps,
            b_matrix: b_matrix_raw(&self.collision, [self.s, 0.0, 0.0], self.eps),
            metric: self.metric.clone(),
            rotation: Matrix3::identity(),
            collision: self.collision.clone(),
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.xi[1] == 0.0 && self.xi[2] == 0.0 && self.xi[0] > 0.0
    }

    /// Basis matrix of `f ↦ f(O·)`, carrying canonical-frame vectors to this mode.
    pub fn pushforward(&self) -> RMat {
        if self.rotation == Matrix3::identity() {
            DMatrix::identity(self.dim(), self.dim())
        } else {
            self.collision.basis.rotation_matrix(&self.rotation)
        }
    }

    pub fn inner(&self, f: &CVec, g: &CVec) -> Complex {
        weighted_inner_unchecked(f, g, self.s)
    }

    pub fn norm(&self, f: &CVec) -> f64 {
        self.inner(f, f).re.max(0.0).sqrt()
    }

    pub fn apply(&self, f: &CVec) -> CVec {
        &self.b_matrix * f
    }

    /// Adjoint in the ξ-metric, `G⁻¹ Bᴴ G`.
    pub fn adjoint(&self) -> CMat {
        let g = to_complex_mat(&self.metric);
        let mut ginv = self.metric.clone();
        ginv[(0, 0)] = 1.0 / ginv[(0, 0)];
        to_complex_mat(&ginv) * self.b_matrix.adjoint() * g
    }

    /// Largest eigenvalue of the ξ-symmetric part `(B + B^†)/2`.
    pub fn numerical_abscissa(&self) -> f64 {
        let g = to_complex_mat(&self.metric);
        let gb = &g * &self.b_matrix;
        let herm = (&gb + gb.adjoint()) * Complex::new(0.5, 0.0);
        // G^{-1/2} H G^{-1/2} is Hermitian with the same spectrum as G⁻¹H
        let mut w = DMatrix::identity(self.dim(), self.dim());
        w[(0, 0)] = 1.0 / self.metric[(0, 0)].sqrt();
        let w = to_complex_mat(&w);
        let sym = &w * herm * &w;
        let e = nalgebra::SymmetricEigen::new(sym);
        e.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_example() {
        let (s, o) = reduce_to_1d([0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s, 2.0);
        let img = o * Vector3::y();
        assert!((img - Vector3::x()).norm() < 1e-15);
        assert!((o.determinant() - 1.0).abs() < 1e-14);
        assert!(reduce_to_1d([0.0; 3]).is_err());
    }

    #[test]
    fn rotation_is_proper_for_random_directions() {
        for xi in [[0.3, -1.2, 0.5], [-1.0, 0.0, 0.0], [1e-3, 4.0, -2.0]] {
            let (s, o) = reduce_to_1d(xi).unwrap();
            let img = o * Vector3::from(xi) / s;
            assert!((img - Vector3::x()).norm() < 1e-14);
            assert!((o.determinant() - 1.0).abs() < 1e-14);
            assert!((o.transpose() * o - Matrix3::identity()).norm() < 1e-14);
        }
    }
}
