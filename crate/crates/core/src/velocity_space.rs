//! Truncated Hermite-function basis of `L²(ℝ³_v)` and the macro/micro projections.
//!
//! Basis functions are `e_α(v) = Π_i h_{α_i}(v_i) · √M(v)` where `h_k` are the
//! normalized probabilists' Hermite polynomials and `M` the standard Maxwellian.
//! Coefficient vectors are expressed in this orthonormal basis, so the plain
//! Euclidean product of coefficients is the `L²_v` product.

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VpbError};
use crate::hermite::{basis_dim, graded_lex_indices, graded_lex_position, hermite_values};
use crate::quadrature::gauss_hermite;
use crate::Coeff;

pub const DESCRIPTOR_VERSION: u32 = 1;
pub const DEFAULT_TOL_QUAD: f64 = 1e-10;

/// Default product-rule order for a given truncation degree.
pub fn default_quad_order(max_degree: usize) -> usize {
    2 * max_degree + 4
}

#[derive(Debug, Clone)]
pub struct VelocityBasis {
    pub max_degree: usize,
    pub quad_order: usize,
    pub dim: usize,
    pub indices: Vec<[usize; 3]>,
    /// Product Gauss–Hermite nodes.
    pub quad_nodes: Vec<[f64; 3]>,
    /// Weights for the Maxwellian measure: `∫ p(v) M(v) dv ≈ Σ w_k p(v_k)`.
    pub quad_weights: Vec<f64>,
    /// Support of χ₀..χ₄ in the index list (χ₄ spans three indices).
    pub invariant_indices: [Vec<usize>; 5],
    /// Coefficient vectors of χ₀..χ₄.
    pub chi: [DVector<f64>; 5],
    pub tol_quad: f64,
    /// Largest entry of `Gram − I` measured at construction.
    pub gram_error: f64,
    /// Polynomial parts `Π h_{α_i}(v_i)` at the nodes, nodes × dim.
    pub node_values: DMatrix<f64>,
    mult: [DMatrix<f64>; 3],
    p0: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub version: u32,
    pub max_degree: usize,
    pub quad_order: usize,
    pub index_order_hash: String,
}

impl BasisDescriptor {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    /// Hex SHA-256 of the JSON document; used as cache key.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Moments `n = (f,χ₀)`, `m = (f,vχ₀)`, `q = (f,χ₄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroState<T = f64> {
    pub n: T,
    pub m: [T; 3],
    pub q: T,
    /// `n/|ξ|²` once a mode is attached, zero otherwise.
    pub phi_factor: T,
}

impl<T: Coeff> MacroState<T> {
    pub fn new(n: T, m: [T; 3], q: T) -> Self {
        Self { n, m, q, phi_factor: T::zero() }
    }

    pub fn at_mode(mut self, xi_norm: f64) -> Self {
        self.phi_factor = self.n.unscale(xi_norm * xi_norm);
        self
    }
}

/// Evaluates the multi-index polynomial parts at a point.
pub fn eval_polys(indices: &[[usize; 3]], max_degree: usize, v: [f64; 3]) -> Vec<f64> {
    let h: Vec<Vec<f64>> = v.iter().map(|&x| hermite_values(max_degree, x)).collect();
    indices
        .iter()
        .map(|a| h[0][a[0]] * h[1][a[1]] * h[2][a[2]])
        .collect()
}

/// `(2π)^{-3/4} e^{-|v|²/4}`.
pub fn sqrt_maxwellian(v: [f64; 3]) -> f64 {
    let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    (std::f64::consts::TAU).powf(-0.75) * (-r2 / 4.0).exp()
}

pub fn build_basis(max_degree: usize, quad_order: usize) -> Result<VelocityBasis> {
    build_basis_with_tol(max_degree, quad_order, DEFAULT_TOL_QUAD)
}

pub fn build_basis_with_tol(max_degree: usize, quad_order: usize, tol_quad: f64) -> Result<VelocityBasis> {
    if max_degree < 2 {
        return Err(VpbError::InvalidArgument(format!(
            "max_degree must be at least 2 to hold the collision invariants, got {max_degree}"
        )));
    }
    if quad_order < max_degree + 2 {
        return Err(VpbError::InvalidArgument(format!(
            "quad_order must be at least max_degree + 2 = {}, got {quad_order}",
            max_degree + 2
        )));
    }
    let indices = graded_lex_indices(max_degree);
    let dim = basis_dim(max_degree);
    let rule = gauss_hermite::<f64>(quad_order)?;
    let np = quad_order.pow(3);
    let mut quad_nodes = Vec::with_capacity(np);
    let mut quad_weights = Vec::with_capacity(np);
    for i in 0..quad_order {
        for j in 0..quad_order {
            for k in 0..quad_order {
                quad_nodes.push([rule.nodes[i], rule.nodes[j], rule.nodes[k]]);
                quad_weights.push(rule.weights[i] * rule.weights[j] * rule.weights[k]);
            }
        }
    }
    if let Some(w) = quad_weights.iter().find(|w| !(**w > 0.0)) {
        return Err(VpbError::Quadrature(format!("non-positive product weight {w:e}")));
    }
    let mut node_values = DMatrix::zeros(np, dim);
    for (r, v) in quad_nodes.iter().enumerate() {
        for (c, x) in eval_polys(&indices, max_degree, *v).into_iter().enumerate() {
            node_values[(r, c)] = x;
        }
    }
    let mut weighted = node_values.clone();
    for (r, w) in quad_weights.iter().enumerate() {
        weighted.row_mut(r).scale_mut(*w);
    }
    let gram = node_values.transpose() * &weighted;
    let gram_error = (gram - DMatrix::identity(dim, dim)).amax();
    if gram_error > tol_quad {
        return Err(VpbError::Quadrature(format!(
            "Gram matrix deviates from identity by {gram_error:e} (> {tol_quad:e})"
        )));
    }

    let pos = graded_lex_position;
    let mut chi: [DVector<f64>; 5] = std::array::from_fn(|_| DVector::zeros(dim));
    chi[0][0] = 1.0;
    for k in 0..3 {
        let mut a = [0; 3];
        a[k] = 1;
        chi[k + 1][pos(a)] = 1.0;
    }
    // (|v|²−3)/√6 = Σ_i √2 h_2(v_i)/√6
    let mut chi4_support = Vec::new();
    for k in 0..3 {
        let mut a = [0; 3];
        a[k] = 2;
        chi[4][pos(a)] = (1.0f64 / 3.0).sqrt();
        chi4_support.push(pos(a));
    }
    let invariant_indices = [vec![0], vec![1], vec![2], vec![3], chi4_support];

    let mult = std::array::from_fn(|k| multiplication_matrix(&indices, max_degree, k));
    let mut p0 = DMatrix::zeros(dim, dim);
    for c in &chi {
        p0 += c * c.transpose();
    }
    Ok(VelocityBasis {
        max_degree,
        quad_order,
        dim,
        indices,
        quad_nodes,
        quad_weights,
        invariant_indices,
        chi,
        tol_quad,
        gram_error,
        node_values,
        mult,
        p0,
    })
}

fn multiplication_matrix(indices: &[[usize; 3]], max_degree: usize, k: usize) -> DMatrix<f64> {
    let dim = indices.len();
    let mut m = DMatrix::zeros(dim, dim);
    for (col, a) in indices.iter().enumerate() {
        let deg: usize = a.iter().sum();
        if deg < max_degree {
            let mut up = *a;
            up[k] += 1;
            m[(graded_lex_position(up), col)] = ((a[k] + 1) as f64).sqrt();
        }
        if a[k] > 0 {
            let mut down = *a;
            down[k] -= 1;
            m[(graded_lex_position(down), col)] = (a[k] as f64).sqrt();
        }
    }
    m
}

impl VelocityBasis {
    pub fn descriptor(&self) -> BasisDescriptor {
        let mut h = Sha256::new();
        for a in &self.indices {
            h.update(format!("{},{},{};", a[0], a[1], a[2]).as_bytes());
        }
        BasisDescriptor {
            version: DESCRIPTOR_VERSION,
            max_degree: self.max_degree,
            quad_order: self.quad_order,
            index_order_hash: hex::encode(h.finalize()),
        }
    }

    pub fn index_of(&self, alpha: [usize; 3]) -> Option<usize> {
        (alpha.iter().sum::<usize>() <= self.max_degree).then(|| graded_lex_position(alpha))
    }

    /// Galerkin matrix of multiplication by `v_k` (k = 0, 1, 2); overflow beyond
    /// the truncation degree is discarded.
    pub fn mult(&self, k: usize) -> &DMatrix<f64> {
        &self.mult[k]
    }

    /// Multiplication by `v·ξ`.
    pub fn mult_dir(&self, xi: [f64; 3]) -> DMatrix<f64> {
        &self.mult[0] * xi[0] + &self.mult[1] * xi[1] + &self.mult[2] * xi[2]
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn p1(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) - &self.p0
    }

    pub fn pd(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        m[(0, 0)] = 1.0;
        m
    }

    /// Metric of `(·,·)_ξ`: identity plus `|ξ|^{-2}` on the `√M` direction.
    pub fn metric(&self, xi_norm: f64) -> DMatrix<f64> {
        let mut g = DMatrix::identity(self.dim, self.dim);
        g[(0, 0)] += 1.0 / (xi_norm * xi_norm);
        g
    }

    /// Coefficients of `p(v)√M` for a function `p` evaluated at the nodes.
    pub fn project_fn<F: Fn([f64; 3]) -> f64>(&self, p: F) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (r, v) in self.quad_nodes.iter().enumerate() {
            let fw = p(*v) * self.quad_weights[r];
            if fw != 0.0 {
                out.axpy(fw, &self.node_values.row(r).transpose(), 1.0);
            }
        }
        out
    }

    /// Pointwise value of the function with coefficients `f` at `v`.
    pub fn evaluate(&self, f: &DVector<f64>, v: [f64; 3]) -> f64 {
        let p = eval_polys(&self.indices, self.max_degree, v);
        f.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() * sqrt_maxwellian(v)
    }

    pub fn project_macro<T: Coeff>(&self, f: &DVector<T>) -> MacroState<T> {
        let dot = |c: &DVector<f64>| f.iter().zip(c.iter()).fold(T::zero(), |acc, (a, b)| acc + a.scale(*b));
        MacroState::new(dot(&self.chi[0]), [dot(&self.chi[1]), dot(&self.chi[2]), dot(&self.chi[3])], dot(&self.chi[4]))
    }

    pub fn reconstruct<T: Coeff>(&self, s: &MacroState<T>) -> DVector<T> {
        let mut out = DVector::from_element(self.dim, T::zero());
        let parts = [s.n, s.m[0], s.m[1], s.m[2], s.q];
        for (c, a) in self.chi.iter().zip(parts) {
            for (o, x) in out.iter_mut().zip(c.iter()) {
                *o += a.scale(*x);
            }
        }
        out
    }

    pub fn macro_part<T: Coeff>(&self, f: &DVector<T>) -> DVector<T> {
        self.reconstruct(&self.project_macro(f))
    }

    pub fn micro_part<T: Coeff>(&self, f: &DVector<T>) -> DVector<T> {
        f - self.macro_part(f)
    }

    /// `(f,g)_ξ = (f,g) + |ξ|^{-2} (P_d f, P_d g)`, conjugate-linear in `g`.
    pub fn weighted_inner(&self, f: &DVector<Complex64>, g: &DVector<Complex64>, xi_norm: f64) -> Result<Complex64> {
        if !(xi_norm > 0.0) {
            return Err(VpbError::InvalidArgument(
                "weighted inner product needs |xi| > 0".into(),
            ));
        }
        Ok(weighted_inner_unchecked(f, g, xi_norm))
    }

    pub fn weighted_norm(&self, f: &DVector<Complex64>, xi_norm: f64) -> f64 {
        weighted_inner_unchecked(f, f, xi_norm).re.max(0.0).sqrt()
    }

    /// Basis representation of the pullback `f ↦ f(O·)` for an orthogonal `O`.
    pub fn rotation_matrix(&self, o: &Matrix3<f64>) -> DMatrix<f64> {
        let np = self.quad_nodes.len();
        let mut rotated = DMatrix::zeros(np, self.dim);
        for (r, v) in self.quad_nodes.iter().enumerate() {
            let w = o * nalgebra::Vector3::from(*v);
            for (c, x) in eval_polys(&self.indices, self.max_degree, [w[0], w[1], w[2]])
                .into_iter()
                .enumerate()
            {
                rotated[(r, c)] = x * self.quad_weights[r];
            }
        }
        let mut m = self.node_values.transpose() * rotated;
        // exact zeros between different degrees
        for (i, a) in self.indices.iter().enumerate() {
            for (j, b) in self.indices.iter().enumerate() {
                if a.iter().sum::<usize>() != b.iter().sum::<usize>() {
                    m[(i, j)] = 0.0;
                }
            }
        }
        m
    }
}

pub fn weighted_inner_unchecked(f: &DVector<Complex64>, g: &DVector<Complex64>, xi_norm: f64) -> Complex64 {
    g.dotc(f) + f[0] * g[0].conj() / (xi_norm * xi_norm)
}

/// Bilinear pairing `[f,g] = (f, conj g)_ξ` used for eigenvector normalization.
pub fn bilinear(f: &DVector<Complex64>, g: &DVector<Complex64>, xi_norm: f64) -> Complex64 {
    g.dot(f) + f[0] * g[0] / (xi_norm * xi_norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cplx(v: &DVector<f64>) -> DVector<Complex64> {
        v.map(|x| Complex64::new(x, 0.0))
    }

    #[test]
    fn dims_and_gram() {
        let b = build_basis(2, 8).unwrap();
        assert_eq!(b.dim, 10);
        assert!(b.gram_error < 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                let d = b.chi[i].dot(&b.chi[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invariants_pointwise() {
        let b = build_basis(6, 16).unwrap();
        let c = std::f64::consts::TAU.powf(-0.75);
        assert!((b.evaluate(&b.chi[0], [0.0; 3]) - c).abs() < 1e-14);
        assert!((b.evaluate(&b.chi[4], [0.0; 3]) + 3.0 * c / 6f64.sqrt()).abs() < 1e-14);
        let v = [0.3, -1.1, 0.8];
        assert!((b.evaluate(&b.chi[2], v) - v[1] * sqrt_maxwellian(v)).abs() < 1e-14);
        let r2 = v.iter().map(|x| x * x).sum::<f64>();
        let want = (r2 - 3.0) / 6f64.sqrt() * sqrt_maxwellian(v);
        assert!((b.evaluate(&b.chi[4], v) - want).abs() < 1e-14);
    }

    #[test]
    fn macro_projection_examples() {
        let b = build_basis(4, 12).unwrap();
        let s = b.project_macro(&b.chi[1]);
        assert_eq!((s.n, s.m, s.q), (0.0, [1.0, 0.0, 0.0], 0.0));
        let f = b.project_fn(|v| v[0] * v[1]);
        let s = b.project_macro(&f);
        assert!(s.n.abs() < 1e-14 && s.q.abs() < 1e-14 && s.m.iter().all(|x| x.abs() < 1e-14));
        let f = b.project_fn(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        let s = b.project_macro(&f);
        assert!((s.n - 3.0).abs() < 1e-12);
        assert!((s.q - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weighted_inner_examples() {
        let b = build_basis(2, 8).unwrap();
        let c: Vec<_> = b.chi.iter().map(cplx).collect();
        assert!((b.weighted_inner(&c[0], &c[0], 1.0).unwrap() - 2.0).norm() < 1e-15);
        for s in [0.1, 1.0, 7.0] {
            assert!((b.weighted_inner(&c[1], &c[1], s).unwrap() - 1.0).norm() < 1e-15);
            assert!(b.weighted_inner(&c[0], &c[4], s).unwrap().norm() < 1e-15);
        }
        assert!(b.weighted_inner(&c[0], &c[0], 0.0).is_err());
    }

    #[test]
    fn projector_algebra() {
        let b = build_basis(4, 12).unwrap();
        let p0 = b.p0();
        let p1 = b.p1();
        let pd = b.pd();
        assert!((p0 * p0 - p0).amax() < 1e-12);
        assert!((&p1 * &p1 - &p1).amax() < 1e-12);
        assert!((p0 * &p1).amax() < 1e-12);
        assert!((&pd * p0 - &pd).amax() < 1e-12);
    }

    #[test]
    fn multiplication_is_symmetric_and_exact() {
        let b = build_basis(4, 12).unwrap();
        for k in 0..3 {
            let m = b.mult(k);
            assert!((m - m.transpose()).amax() == 0.0);
        }
        // v_1 χ₀ = χ₁
        assert!((b.mult(0) * &b.chi[0] - &b.chi[1]).amax() < 1e-15);
        // quadrature check of v_2 times a degree-2 function
        let f = b.project_fn(|v| v[0] * v[2]);
        let g = b.project_fn(|v| v[0] * v[2] * v[1]);
        assert!((b.mult(1) * f - g).amax() < 1e-12);
    }

    #[test]
    fn rotation_matrix_is_orthogonal_and_acts_on_linear_functions() {
        let b = build_basis(4, 12).unwrap();
        let o = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let r = b.rotation_matrix(&o);
        assert!((r.transpose() * &r - DMatrix::identity(b.dim, b.dim)).amax() < 1e-12);
        // pullback of v_1√M is (Ov)_1 √M = Σ_j O_{1j} v_j √M
        let img = &r * &b.chi[1];
        for j in 0..3 {
            assert!((img[j + 1] - o[(0, j)]).abs() < 1e-13);
        }
    }

    #[test]
    fn descriptor_hash_is_stable() {
        let a = build_basis(3, 10).unwrap().descriptor();
        let b = build_basis(3, 10).unwrap().descriptor();
        assert_eq!(a.hash(), b.hash());
        let c = build_basis(3, 11).unwrap().descriptor();
        assert_ne!(a.hash(), c.hash());
        let back: BasisDescriptor = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_basis(1, 8).is_err());
        assert!(build_basis(4, 5).is_err());
    }
}
